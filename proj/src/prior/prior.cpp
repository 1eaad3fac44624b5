#include "emseg/prior/prior.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "emseg/binary_io.hpp"
#include "emseg/nn/adam.hpp"
#include "emseg/phantom/case_io.hpp"
#include "emseg/prior/edl.hpp"
#include "emseg/rng.hpp"

namespace emseg::prior {
namespace {

constexpr std::size_t kForwardChunk = 65536;

nn::Tensor<float> gather(const VoxelSet& set, std::span<const std::size_t> rows) {
    nn::Tensor<float> batch({rows.size(), set.features});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy_n(set.values.begin() + static_cast<std::ptrdiff_t>(rows[r] * set.features),
                    set.features, batch.data.begin() + static_cast<std::ptrdiff_t>(r * set.features));
    }
    return batch;
}

/// Raw outputs for every voxel of the set, [n, 2] row-major.
std::vector<float> raw_outputs(const PriorModel& model, const VoxelSet& set) {
    std::vector<float> out(set.size() * kClasses);
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < set.size(); start += kForwardChunk) {
        const std::size_t end = std::min(set.size(), start + kForwardChunk);
        rows.resize(end - start);
        for (std::size_t i = start; i < end; ++i) {
            rows[i - start] = i;
        }
        const nn::Tensor<float> y = nn::forward(model.spec, model.state, gather(set, rows));
        std::copy(y.data.begin(), y.data.end(),
                  out.begin() + static_cast<std::ptrdiff_t>(start * kClasses));
    }
    return out;
}

void append_row(VoxelSet& dst, const VoxelSet& src, std::size_t row) {
    dst.values.insert(dst.values.end(),
                      src.values.begin() + static_cast<std::ptrdiff_t>(row * src.features),
                      src.values.begin() + static_cast<std::ptrdiff_t>((row + 1) * src.features));
    dst.labels.push_back(src.labels[row]);
}

} // namespace

BalancedSampler::BalancedSampler(std::vector<std::size_t> class0_rows,
                                 std::vector<std::size_t> class1_rows, std::uint64_t seed)
    : rng_(seed), rows_{std::move(class0_rows), std::move(class1_rows)} {
    for (auto& r : rows_) {
        if (r.empty()) {
            throw DataError("BalancedSampler: empty class");
        }
        rng_.shuffle(r);
    }
}

std::size_t BalancedSampler::next(int label) {
    auto& rows = rows_[label];
    auto& cursor = cursor_[label];
    if (cursor == rows.size()) {
        rng_.shuffle(rows);
        cursor = 0;
    }
    return rows[cursor++];
}

void BalancedSampler::fill(std::span<std::size_t> rows, std::span<std::uint8_t> labels) {
    if (rows.size() != labels.size()) {
        throw StructuralError("BalancedSampler: rows and labels differ in length");
    }
    const std::size_t n_pos = rows.size() / 2;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int label = i < n_pos ? 1 : 0;
        rows[i] = next(label);
        labels[i] = static_cast<std::uint8_t>(label);
    }
}

void PriorTrainConfig::validate() const {
    if (!(learning_rate > 0.0) || epochs <= 0 || batch_size < 2 || anneal_epochs < 0) {
        throw ContractError("prior config: learning rate, epochs and batch size must be positive");
    }
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw ContractError("prior config: validation fraction must lie in (0, 1)");
    }
}

int PriorTrainConfig::effective_anneal_epochs() const {
    if (anneal_epochs > 0) {
        return anneal_epochs;
    }
    return std::max(1, static_cast<int>(std::lround(0.1 * epochs)));
}

double PriorTrainConfig::anneal_at(int epoch) const {
    return std::min(1.0, static_cast<double>(epoch) / effective_anneal_epochs());
}

std::size_t VoxelSet::count(std::uint8_t label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

VoxelSet collect_prior_voxels(const std::vector<phantom::PhantomCase>& cases) {
    VoxelSet set;
    for (const auto& c : cases) {
        const auto channels = c.channel_indices(phantom::ChannelRole::Physiological);
        if (channels.empty()) {
            throw DataError("case " + c.id + " has no physiological channels");
        }
        if (set.features == 0) {
            set.features = channels.size();
        } else if (set.features != channels.size()) {
            throw StructuralError("case " + c.id + " has a different physiological channel count");
        }
        for (std::size_t i = 0; i < c.partition.labels.size(); ++i) {
            const Region r = c.partition.at(i);
            if (!is_observed(r)) {
                continue;
            }
            for (std::size_t ch : channels) {
                set.values.push_back(c.channels[ch].values.data[i]);
            }
            set.labels.push_back(r == Region::Roi1 ? 1 : 0);
        }
    }
    return set;
}

nn::NetworkSpec prior_network(int features) {
    nn::NetworkSpec spec;
    spec.head = nn::HeadKind::RawEvidence;
    spec.layers = {nn::dense(features, features), nn::relu(), nn::dense(features, features),
                   nn::relu(), nn::dense(features, kClasses)};
    spec.validate();
    return spec;
}

nn::ModelState initial_prior_state(const nn::NetworkSpec& spec, std::uint64_t seed) {
    nn::ModelState state = nn::ModelState::initialize(spec, seed);
    const std::size_t last = spec.layers.size() - 1;
    const std::size_t bias = spec.parameter_offsets()[last] +
                             static_cast<std::size_t>(spec.layers[last].fan_in * kClasses);
    std::fill_n(state.parameters.begin() + static_cast<std::ptrdiff_t>(bias), kClasses,
                kInitialEvidence);
    return state;
}

double validation_loss(const PriorModel& model, const VoxelSet& voxels) {
    const std::vector<float> raw = raw_outputs(model, voxels);
    std::array<double, kClasses> sum{};
    std::array<std::size_t, kClasses> n{};
    for (std::size_t i = 0; i < voxels.size(); ++i) {
        const EvidentialOutput o = edl_transform(raw[2 * i], raw[2 * i + 1]);
        const int y = voxels.labels[i] ? 1 : 0;
        const Pair label{y ? 0.0 : 1.0, y ? 1.0 : 0.0};
        sum[y] += edl_sample_loss(o.alpha, label, 1.0);
        ++n[y];
    }
    double total = 0.0;
    int present = 0;
    for (int k = 0; k < kClasses; ++k) {
        if (n[k] > 0) {
            total += sum[k] / static_cast<double>(n[k]);
            ++present;
        }
    }
    if (present == 0) {
        throw DataError("validation_loss: empty voxel set");
    }
    return total / present;
}

double accuracy(const PriorModel& model, const VoxelSet& voxels) {
    const std::vector<float> raw = raw_outputs(model, voxels);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < voxels.size(); ++i) {
        const EvidentialOutput o = edl_transform(raw[2 * i], raw[2 * i + 1]);
        correct += (o.probability[1] > 0.5) == (voxels.labels[i] != 0);
    }
    return voxels.size() ? static_cast<double>(correct) / static_cast<double>(voxels.size()) : 0.0;
}

double mean_uncertainty(const PriorModel& model, const VoxelSet& voxels) {
    const std::vector<float> raw = raw_outputs(model, voxels);
    double total = 0.0;
    for (std::size_t i = 0; i < voxels.size(); ++i) {
        total += edl_transform(raw[2 * i], raw[2 * i + 1]).uncertainty;
    }
    return voxels.size() ? total / static_cast<double>(voxels.size()) : 0.0;
}

PriorTrainResult train_prior(const VoxelSet& voxels, const PriorTrainConfig& config) {
    config.validate();
    if (voxels.features == 0 || voxels.values.size() != voxels.size() * voxels.features) {
        throw StructuralError("train_prior: voxel feature matrix does not match its labels");
    }
    std::array<std::vector<std::size_t>, kClasses> by_class;
    for (std::size_t i = 0; i < voxels.size(); ++i) {
        by_class[voxels.labels[i] ? 1 : 0].push_back(i);
    }
    for (int k = 0; k < kClasses; ++k) {
        if (by_class[k].size() < 2) {
            throw DataError(std::string("train_prior: class ") + (k ? "ROI1" : "ROI3") +
                            " needs at least 2 voxels");
        }
    }

    Rng split_rng(child_seed(config.seed, 0));
    PriorTrainResult result;
    result.validation.features = voxels.features;
    std::array<std::vector<std::size_t>, kClasses> train_rows;
    for (int k = 0; k < kClasses; ++k) {
        auto rows = by_class[k];
        split_rng.shuffle(rows);
        const auto n_val = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(config.validation_fraction * rows.size())), 1,
            rows.size() - 1);
        std::vector<std::size_t> val(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_val));
        std::sort(val.begin(), val.end());
        train_rows[k].assign(rows.begin() + static_cast<std::ptrdiff_t>(n_val), rows.end());
        std::sort(train_rows[k].begin(), train_rows[k].end());
        for (std::size_t r : val) {
            append_row(result.validation, voxels, r);
        }
    }

    PriorModel model{prior_network(static_cast<int>(voxels.features)), {}};
    model.state = initial_prior_state(model.spec, child_seed(config.seed, 1));
    const nn::AdamConfig adam{config.learning_rate};

    const std::size_t train_count = train_rows[0].size() + train_rows[1].size();
    const std::size_t steps = (train_count + config.batch_size - 1) / config.batch_size;
    BalancedSampler sampler(std::move(train_rows[0]), std::move(train_rows[1]),
                            child_seed(config.seed, 2));

    std::vector<std::size_t> rows(config.batch_size);
    std::vector<std::uint8_t> labels(config.batch_size);
    double best = 0.0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const double anneal = config.anneal_at(epoch);
        double epoch_loss = 0.0;
        try {
            for (std::size_t step = 0; step < steps; ++step) {
                sampler.fill(rows, labels);
                const auto loss = edl_loss_closure<float>(labels, anneal);
                const auto eval =
                    nn::evaluate_with_gradients(model.spec, model.state, gather(voxels, rows), loss);
                nn::adam_update(model.state, eval.gradient, adam);
                epoch_loss += eval.loss;
            }
        } catch (const NumericError& e) {
            throw NumericError("train_prior: epoch " + std::to_string(epoch) + ": " + e.what());
        }
        PriorEpoch record{epoch, anneal, epoch_loss / static_cast<double>(steps),
                          validation_loss(model, result.validation)};
        if (!std::isfinite(record.validation_loss)) {
            throw NumericError("train_prior: epoch " + std::to_string(epoch) +
                               ": non-finite validation loss");
        }
        if (result.history.empty() || record.validation_loss < best) {
            best = record.validation_loss;
            result.best_epoch = epoch;
            result.model = model;
        }
        result.history.push_back(record);
    }
    return result;
}

PriorTrainResult train_prior(const std::vector<phantom::PhantomCase>& cases,
                             const PriorTrainConfig& config) {
    return train_prior(collect_prior_voxels(cases), config);
}

PriorMap predict_prior_map(const PriorModel& model, const phantom::PhantomCase& c) {
    const auto channels = c.channel_indices(phantom::ChannelRole::Physiological);
    if (static_cast<int>(channels.size()) != model.spec.input_width()) {
        throw StructuralError("predict_prior_map: classifier expects " +
                              std::to_string(model.spec.input_width()) +
                              " physiological channels, case " + c.id + " has " +
                              std::to_string(channels.size()));
    }
    PriorMap map;
    map.extents = c.extents();
    map.voxels = c.partition.indices(Region::Roi2);
    VoxelSet set;
    set.features = channels.size();
    set.labels.assign(map.voxels.size(), 0);
    set.values.reserve(map.voxels.size() * channels.size());
    for (std::size_t v : map.voxels) {
        for (std::size_t ch : channels) {
            set.values.push_back(c.channels[ch].values.data[v]);
        }
    }
    const std::vector<float> raw = raw_outputs(model, set);
    map.probability.resize(map.size());
    map.uncertainty.resize(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) {
        const EvidentialOutput o = edl_transform(raw[2 * i], raw[2 * i + 1]);
        map.probability[i] = static_cast<float>(o.probability[1]);
        map.uncertainty[i] = static_cast<float>(o.uncertainty);
    }
    return map;
}

void write_prior_map(const std::filesystem::path& case_dir, const PriorMap& map) {
    std::vector<float> p(map.extents.voxels(), 0.0f);
    std::vector<float> u(map.extents.voxels(), 0.0f);
    for (std::size_t i = 0; i < map.size(); ++i) {
        p[map.voxels[i]] = map.probability[i];
        u[map.voxels[i]] = map.uncertainty[i];
    }
    write_f32_file(case_dir / kPriorProbabilityFile, p);
    write_f32_file(case_dir / kPriorUncertaintyFile, u);
    phantom::register_case_file(case_dir, kPriorProbabilityFile);
    phantom::register_case_file(case_dir, kPriorUncertaintyFile);
}

PriorMap read_prior_map(const std::filesystem::path& case_dir, const RegionPartition& partition) {
    phantom::verify_case_file(case_dir, kPriorProbabilityFile);
    phantom::verify_case_file(case_dir, kPriorUncertaintyFile);
    const std::size_t n = partition.extents().voxels();
    const auto p = read_f32_file(case_dir / kPriorProbabilityFile, n);
    const auto u = read_f32_file(case_dir / kPriorUncertaintyFile, n);
    PriorMap map;
    map.extents = partition.extents();
    map.voxels = partition.indices(Region::Roi2);
    for (std::size_t v : map.voxels) {
        if (!(p[v] >= 0.0f && p[v] <= 1.0f) || !(u[v] > 0.0f && u[v] <= 1.0f)) {
            throw FormatError((case_dir / kPriorProbabilityFile).string() +
                              ": prior value out of range at voxel " + std::to_string(v));
        }
        map.probability.push_back(p[v]);
        map.uncertainty.push_back(u[v]);
    }
    return map;
}

} // namespace emseg::prior
