#include "emseg/seg/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "emseg/nn/adam.hpp"
#include "emseg/rng.hpp"

namespace emseg::seg {
namespace {

constexpr std::size_t kPredictChunk = 8;

/// Per-case arrays reused across epochs.
struct CaseData {
    std::vector<float> inputs;
    std::vector<float> targets;
    std::size_t slice_inputs = 0;
    std::size_t slice_voxels = 0;
};

std::vector<float> roi2_values(const Volume<float>& p, const std::vector<std::size_t>& voxels) {
    std::vector<float> out(voxels.size());
    for (std::size_t k = 0; k < voxels.size(); ++k) {
        out[k] = p.data[voxels[k]];
    }
    return out;
}

} // namespace

void SegTrainConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ContractError("seg config: lambda must lie in [0, 1]");
    }
    if (!(learning_rate > 0.0) || epochs <= 0 || batch_slices == 0 || base_width <= 0) {
        throw ContractError("seg config: learning rate, epochs, batch size and width must be positive");
    }
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw ContractError("seg config: validation fraction must lie in (0, 1)");
    }
}

nn::NetworkSpec unet_spec(int input_channels, int base_width) {
    const int w = base_width;
    nn::NetworkSpec spec;
    spec.head = nn::HeadKind::SigmoidProbability;
    spec.layers = {
        nn::conv(input_channels, w, 3), nn::relu(), nn::conv(w, w, 3), nn::relu(),
        nn::push(), nn::max_pool(),
        nn::conv(w, 2 * w, 3), nn::relu(), nn::conv(2 * w, 2 * w, 3), nn::relu(),
        nn::push(), nn::max_pool(),
        nn::conv(2 * w, 4 * w, 3), nn::relu(), nn::conv(4 * w, 4 * w, 3), nn::relu(),
        nn::upsample(), nn::conv(4 * w, 2 * w, 3), nn::relu(), nn::concat(),
        nn::conv(4 * w, 2 * w, 3), nn::relu(), nn::conv(2 * w, 2 * w, 3), nn::relu(),
        nn::upsample(), nn::conv(2 * w, w, 3), nn::relu(), nn::concat(),
        nn::conv(2 * w, w, 3), nn::relu(), nn::conv(w, w, 3), nn::relu(),
        nn::conv(w, 1, 1), nn::sigmoid(),
    };
    spec.validate();
    return spec;
}

std::vector<std::size_t> segmenter_channels(const phantom::PhantomCase& c) {
    auto channels = c.channel_indices(phantom::ChannelRole::Structural);
    const auto phys = c.channel_indices(phantom::ChannelRole::Physiological);
    channels.insert(channels.end(), phys.begin(), phys.end());
    return channels;
}

void append_slice(const phantom::PhantomCase& c, std::span<const std::size_t> channels, int z,
                  std::vector<float>& out) {
    const std::size_t n = c.extents().slice_voxels();
    const std::size_t offset = static_cast<std::size_t>(z) * n;
    for (std::size_t ch : channels) {
        const auto& v = c.channels[ch].values.data;
        out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>(offset),
                   v.begin() + static_cast<std::ptrdiff_t>(offset + n));
    }
}

Volume<float> predict_volume(const SegModel& model, const phantom::PhantomCase& c) {
    const Extents e = c.extents();
    const auto channels = segmenter_channels(c);
    if (static_cast<int>(channels.size()) != model.spec.input_width()) {
        throw StructuralError("predict_volume: segmenter expects " +
                              std::to_string(model.spec.input_width()) + " channels, case " + c.id +
                              " has " + std::to_string(channels.size()));
    }
    Volume<float> out(e);
    std::vector<float> block;
    for (int z0 = 0; z0 < e.nz; z0 += static_cast<int>(kPredictChunk)) {
        const int z1 = std::min(e.nz, z0 + static_cast<int>(kPredictChunk));
        block.clear();
        for (int z = z0; z < z1; ++z) {
            append_slice(c, channels, z, block);
        }
        const nn::Tensor<float> batch(
            {static_cast<std::size_t>(z1 - z0), channels.size(), static_cast<std::size_t>(e.ny),
             static_cast<std::size_t>(e.nx)},
            std::move(block));
        const nn::Tensor<float> p = nn::forward(model.spec, model.state, batch);
        std::copy(p.data.begin(), p.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(z0 * e.slice_voxels()));
        block = {};
    }
    return out;
}

Volume<std::uint8_t> segment(const Volume<float>& probability, const RegionPartition& partition,
                             double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) {
        throw ContractError("segment: tau must lie in [0, 1]");
    }
    if (probability.extents != partition.extents()) {
        throw StructuralError("segment: probability extents differ from the partition");
    }
    Volume<std::uint8_t> mask(probability.extents);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const Region r = partition.at(i);
        mask.data[i] = (r == Region::Roi1 || r == Region::Roi2) &&
                       static_cast<double>(probability.data[i]) > tau;
    }
    return mask;
}

Volume<std::uint8_t> segment(const SegModel& model, const phantom::PhantomCase& c, double tau) {
    return segment(predict_volume(model, c), c.partition, tau);
}

SegTrainResult train_emredl(const std::vector<phantom::PhantomCase>& cases,
                            const std::vector<prior::PriorMap>& priors, const SegTrainConfig& config,
                            const EpochObserver& observer) {
    config.validate();
    if (cases.size() < 2) {
        throw DataError("train_emredl: at least 2 cases are needed for a validation split");
    }
    const bool use_em = !config.baseline;
    if (use_em && priors.size() != cases.size()) {
        throw ConfigError("train_emredl: " + std::to_string(priors.size()) + " prior maps for " +
                          std::to_string(cases.size()) + " cases; priors are required unless the "
                          "baseline flag is set");
    }
    const Extents e = cases.front().extents();
    if (e.nx % 4 != 0 || e.ny % 4 != 0) {
        throw StructuralError("train_emredl: in-plane extents must be multiples of 4");
    }
    const auto channels = segmenter_channels(cases.front());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        if (cases[i].extents() != e || segmenter_channels(cases[i]).size() != channels.size()) {
            throw StructuralError("train_emredl: case " + cases[i].id +
                                  " differs in extents or channel count");
        }
        if (use_em && (priors[i].extents != e ||
                       priors[i].size() != cases[i].partition.count(Region::Roi2))) {
            throw ConfigError("train_emredl: prior map of case " + cases[i].id +
                              " does not cover its ROI2");
        }
    }

    SegTrainResult result;
    {
        std::vector<std::size_t> order(cases.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng split(child_seed(config.seed, 0));
        split.shuffle(order);
        const auto n_val = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(config.validation_fraction * cases.size())), 1,
            cases.size() - 1);
        result.validation_cases.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
        result.train_cases.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
        std::sort(result.validation_cases.begin(), result.validation_cases.end());
        std::sort(result.train_cases.begin(), result.train_cases.end());
    }

    std::vector<CaseData> data(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        data[i].slice_voxels = e.slice_voxels();
        data[i].slice_inputs = e.slice_voxels() * channels.size();
        data[i].inputs.reserve(data[i].slice_inputs * static_cast<std::size_t>(e.nz));
        for (int z = 0; z < e.nz; ++z) {
            append_slice(cases[i], segmenter_channels(cases[i]), z, data[i].inputs);
        }
        data[i].targets.assign(e.voxels(), 0.0f);
    }

    SegModel model{unet_spec(static_cast<int>(channels.size()), config.base_width), {}};
    model.state = nn::ModelState::initialize(model.spec, child_seed(config.seed, 1));
    const nn::AdamConfig adam{config.learning_rate};
    const double lambda = use_em ? config.lambda : 0.0;

    std::vector<std::pair<std::size_t, int>> slices;
    for (std::size_t c : result.train_cases) {
        for (int z = 0; z < e.nz; ++z) {
            slices.emplace_back(c, z);
        }
    }
    Rng batch_rng(child_seed(config.seed, 2));

    std::vector<std::size_t> em_cases = result.train_cases;
    em_cases.insert(em_cases.end(), result.validation_cases.begin(), result.validation_cases.end());

    double best = 0.0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        LossReport report;
        report.epoch = epoch;
        try {
            if (use_em) {
                std::size_t accepted = 0;
                std::size_t total = 0;
                for (std::size_t c : em_cases) {
                    const prior::PriorMap& prior = priors[c];
                    PseudoLabelField pseudo;
                    if (epoch == 1) {
                        pseudo = e_step(prior, prior.probability, epoch, config.dissimilarity);
                    } else {
                        const auto p = roi2_values(predict_volume(model, cases[c]), prior.voxels);
                        pseudo = e_step(prior, p, epoch, config.dissimilarity);
                    }
                    data[c].targets = dense_targets(cases[c].partition, prior, pseudo);
                    accepted += pseudo.accepted();
                    total += pseudo.size();
                }
                report.gate_fraction = total ? static_cast<double>(accepted) / static_cast<double>(total) : 0.0;
            }

            batch_rng.shuffle(slices);
            std::size_t batches = 0;
            std::vector<float> inputs;
            std::vector<std::uint8_t> regions;
            std::vector<float> targets;
            for (std::size_t start = 0; start < slices.size(); start += config.batch_slices) {
                const std::size_t end = std::min(slices.size(), start + config.batch_slices);
                inputs.clear();
                regions.clear();
                targets.clear();
                for (std::size_t s = start; s < end; ++s) {
                    const auto [c, z] = slices[s];
                    const CaseData& d = data[c];
                    const auto zi = static_cast<std::size_t>(z);
                    inputs.insert(inputs.end(), d.inputs.begin() + static_cast<std::ptrdiff_t>(zi * d.slice_inputs),
                                  d.inputs.begin() + static_cast<std::ptrdiff_t>((zi + 1) * d.slice_inputs));
                    const auto& labels = cases[c].partition.labels.data;
                    regions.insert(regions.end(), labels.begin() + static_cast<std::ptrdiff_t>(zi * d.slice_voxels),
                                   labels.begin() + static_cast<std::ptrdiff_t>((zi + 1) * d.slice_voxels));
                    targets.insert(targets.end(), d.targets.begin() + static_cast<std::ptrdiff_t>(zi * d.slice_voxels),
                                   d.targets.begin() + static_cast<std::ptrdiff_t>((zi + 1) * d.slice_voxels));
                }
                const nn::Tensor<float> batch({end - start, channels.size(), static_cast<std::size_t>(e.ny),
                                               static_cast<std::size_t>(e.nx)},
                                              inputs);
                LossReport step;
                const nn::LossClosure<float> loss = [&](const nn::Tensor<float>& out, nn::Tensor<float>& grad) {
                    step = composite_loss_terms<float>(out.span(), regions, targets, lambda, grad.span(),
                                                       GradientSpace::Logit);
                    return step.j_total;
                };
                const auto eval = nn::evaluate_with_logit_gradients(model.spec, model.state, batch, loss);
                nn::adam_update(model.state, eval.gradient, adam);
                report.j_sup += step.j_sup;
                report.j_reg += step.j_reg;
                report.j_total += step.j_total;
                ++batches;
            }
            report.j_sup /= static_cast<double>(batches);
            report.j_reg /= static_cast<double>(batches);
            report.j_total /= static_cast<double>(batches);
            if (!use_em) {
                report.j_reg = 0.0;
            }

            for (std::size_t c : result.validation_cases) {
                const Volume<float> p = predict_volume(model, cases[c]);
                report.val_j += composite_loss_terms<float>(p.data, cases[c].partition.labels.data,
                                                            data[c].targets, lambda).j_total;
            }
            report.val_j /= static_cast<double>(result.validation_cases.size());
        } catch (const NumericError& err) {
            throw NumericError("train_emredl: epoch " + std::to_string(epoch) + ": " + err.what());
        }
        if (!std::isfinite(report.j_total) || !std::isfinite(report.val_j)) {
            throw NumericError("train_emredl: epoch " + std::to_string(epoch) + ": non-finite loss");
        }
        if (result.history.empty() || report.val_j < best) {
            best = report.val_j;
            result.best_epoch = epoch;
            result.model = model;
        }
        result.history.push_back(report);
        if (observer) {
            observer(report, model.state);
        }
    }
    return result;
}

} // namespace emseg::seg
