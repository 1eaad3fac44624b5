#include "emseg/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <numeric>
#include <optional>
#include <spdlog/spdlog.h>
#include <sstream>

#include "emseg/binary_io.hpp"
#include "emseg/eval/metrics.hpp"
#include "emseg/eval/roc.hpp"
#include "emseg/eval/stats.hpp"
#include "emseg/nn/checkpoint.hpp"
#include "emseg/phantom/case_io.hpp"
#include "emseg/phantom/histogram_match.hpp"
#include "emseg/pipeline/csv.hpp"
#include "emseg/pipeline/svg.hpp"
#include "emseg/rng.hpp"

namespace emseg::pipeline {
namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestHeader = "emseg-run 1";
constexpr const char* kCheckpointFile = "checkpoint.bin";
constexpr const char* kHistoryFile = "history.csv";
constexpr std::size_t kMaxRocPlotPoints = 400;
constexpr std::uint64_t kSplitStream = 4;

std::string hex(std::uint32_t v) { return fmt::format("{:08x}", v); }

std::uint32_t crc_of_text(const std::string& text) {
    return crc32_of({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

struct StageRecord {
    std::string key;
    std::vector<std::pair<std::string, std::string>> files;

    std::string serialize(const std::string& name) const {
        std::string out = "stage " + name + " " + key + "\n";
        for (const auto& [path, crc] : files) {
            out += crc + " " + path + "\n";
        }
        return out;
    }
};

class Manifest {
public:
    Manifest(fs::path root, std::string config_crc) : root_(std::move(root)), config_crc_(std::move(config_crc)) {}

    static Manifest load(const fs::path& root) {
        const auto path = root / "manifest.txt";
        std::istringstream in(read_text_file(path));
        std::string line;
        if (!std::getline(in, line) || line != kManifestHeader) {
            throw PipelineError("unrecognized run manifest " + path.string());
        }
        std::string word;
        std::string crc;
        if (!std::getline(in, line) || !(std::istringstream(line) >> word >> crc) || word != "config") {
            throw PipelineError("run manifest " + path.string() + " lacks a config checksum");
        }
        Manifest m(root, crc);
        std::string current;
        while (std::getline(in, line)) {
            std::istringstream row(line);
            std::string a;
            std::string b;
            std::string c;
            row >> a >> b;
            if (a == "stage") {
                row >> c;
                current = b;
                m.stages_[current] = StageRecord{c, {}};
            } else if (!a.empty() && !current.empty()) {
                m.stages_[current].files.emplace_back(b, a);
            } else if (!a.empty()) {
                throw PipelineError("malformed run manifest " + path.string());
            }
        }
        return m;
    }

    void save() const {
        std::string text = std::string(kManifestHeader) + "\nconfig " + config_crc_ + "\n";
        for (const auto& [name, record] : stages_) {
            text += record.serialize(name);
        }
        const auto tmp = root_ / "manifest.txt.tmp";
        write_text_file(tmp, text);
        fs::rename(tmp, root_ / "manifest.txt");
    }

    const std::string& config_crc() const { return config_crc_; }

    const StageRecord* find(const std::string& stage) const {
        const auto it = stages_.find(stage);
        return it == stages_.end() ? nullptr : &it->second;
    }

    bool up_to_date(const std::string& stage, const std::string& key) const {
        const auto* record = find(stage);
        if (!record || record->key != key) {
            return false;
        }
        for (const auto& [path, crc] : record->files) {
            const auto full = root_ / path;
            std::error_code ec;
            if (!fs::is_regular_file(full, ec) || hex(crc32_of_file(full)) != crc) {
                spdlog::warn("stage {}: output {} changed or missing, rerunning", stage, path);
                return false;
            }
        }
        return true;
    }

    void erase(const std::string& stage) { stages_.erase(stage); }

    void record(const std::string& stage, const std::string& key, const std::vector<fs::path>& outputs) {
        StageRecord r{key, {}};
        for (const auto& out : outputs) {
            r.files.emplace_back(fs::relative(out, root_).generic_string(), hex(crc32_of_file(out)));
        }
        stages_[stage] = std::move(r);
    }

private:
    fs::path root_;
    std::string config_crc_;
    std::map<std::string, StageRecord> stages_;
};

struct Stage {
    std::string name;
    std::vector<std::string> deps;
};

std::string model_stage(const std::string& model) { return "model_" + model; }

std::vector<Stage> plan_stages(const ExperimentConfig& config, const RunRequest& request) {
    std::vector<Stage> plan{{"cases", {}}, {"split", {"cases"}}};
    if (request.goal == Goal::Cases) {
        return plan;
    }
    std::vector<std::string> models;
    bool prior = false;
    switch (request.goal) {
    case Goal::Prior:
        prior = true;
        break;
    case Goal::Model:
        models.push_back(request.model);
        prior = request.model == kEmredl;
        break;
    default:
        models = config.models;
        prior = config.needs_prior();
    }
    if (prior) {
        plan.push_back({"prior", {"cases", "split"}});
    }
    for (const auto& m : models) {
        Stage s{model_stage(m), {"cases", "split"}};
        if (m == kEmredl) {
            s.deps.push_back("prior");
        }
        plan.push_back(std::move(s));
    }
    if (request.goal == Goal::Evaluate) {
        Stage s{"eval", {"cases", "split"}};
        for (const auto& m : models) {
            s.deps.push_back(model_stage(m));
        }
        plan.push_back(std::move(s));
    }
    return plan;
}

std::string stage_key(const Manifest& manifest, const Stage& stage) {
    std::string text = "config " + manifest.config_crc() + "\n";
    for (const auto& dep : stage.deps) {
        const auto* record = manifest.find(dep);
        if (!record) {
            throw PipelineError("stage " + stage.name + " requires stage " + dep + ", which has not run");
        }
        text += record->serialize(dep);
    }
    return hex(crc_of_text(text));
}

bool looks_like_run(const fs::path& dir) { return fs::exists(dir / "manifest.txt"); }

Manifest prepare_directory(const ExperimentConfig& config, const RunRequest& request, const std::string& canonical) {
    const fs::path& root = config.output_dir;
    const std::string crc = hex(crc_of_text(canonical));
    std::error_code ec;
    const bool exists = fs::exists(root, ec);
    const bool empty = !exists || fs::is_empty(root, ec);
    if (exists && !fs::is_directory(root, ec)) {
        throw PipelineError("output path " + root.string() + " exists and is not a directory");
    }
    if (!empty) {
        if (config.overwrite) {
            if (!looks_like_run(root)) {
                throw PipelineError("refusing to clear " + root.string() + ": it does not hold a run manifest");
            }
            spdlog::info("clearing existing run directory {}", root.string());
            fs::remove_all(root);
        } else if (config.resume || request.allow_existing) {
            if (!looks_like_run(root)) {
                throw PipelineError("cannot resume in " + root.string() + ": no run manifest found");
            }
            auto manifest = Manifest::load(root);
            if (manifest.config_crc() != crc) {
                throw PipelineError("run directory " + root.string() +
                                    " was produced by a different configuration; set overwrite = true to replace it");
            }
            return manifest;
        } else {
            throw PipelineError("output directory " + root.string() +
                                " already exists; set resume = true or overwrite = true");
        }
    }
    fs::create_directories(root);
    write_text_file(root / "config.txt", canonical);
    Manifest manifest(root, crc);
    manifest.save();
    return manifest;
}

std::vector<std::string> read_case_index(const RunLayout& layout) {
    const auto table = read_csv(layout.case_index());
    const auto col = table.column("case");
    std::vector<std::string> ids;
    for (const auto& row : table.rows) {
        ids.push_back(row[col]);
    }
    return ids;
}

std::vector<phantom::PhantomCase> load_cases(const RunLayout& layout, const std::vector<std::string>& ids) {
    std::vector<phantom::PhantomCase> cases;
    cases.reserve(ids.size());
    for (const auto& id : ids) {
        try {
            cases.push_back(phantom::read_case(layout.case_dir(id)));
        } catch (const Error& e) {
            throw PipelineError("cannot load case " + id + ": " + e.what());
        }
    }
    return cases;
}

std::vector<fs::path> run_cases(const ExperimentConfig& config, const RunLayout& layout) {
    spdlog::info("generating {} phantom cases", config.phantom.case_count);
    auto generated = phantom::generate_phantom(config.phantom);
    auto matched = phantom::histogram_match(generated, config.histogram_bins);
    for (const auto& flag : matched.constant_channels) {
        spdlog::warn("case {} channel {} is constant before normalization", matched.cases[flag.case_index].id,
                     matched.cases[flag.case_index].channels[flag.channel_index].name);
    }
    fs::remove_all(layout.cases());
    fs::create_directories(layout.cases());
    std::vector<fs::path> outputs;
    std::string index = "case\n";
    for (const auto& c : matched.cases) {
        const auto dir = layout.case_dir(c.id);
        phantom::write_case(dir, c);
        index += c.id + "\n";
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().filename() != "manifest.crc32") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        outputs.insert(outputs.end(), files.begin(), files.end());
    }
    write_text_file(layout.case_index(), index);
    outputs.push_back(layout.case_index());
    return outputs;
}

std::vector<fs::path> run_split(const ExperimentConfig& config, const RunLayout& layout) {
    const auto ids = read_case_index(layout);
    const auto n_train = static_cast<std::size_t>(std::lround(config.train_fraction * static_cast<double>(ids.size())));
    if (n_train < 2 || n_train >= ids.size()) {
        throw PipelineError(fmt::format("split of {} cases leaves {} for training", ids.size(), n_train));
    }
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(child_seed(config.seed, kSplitStream));
    rng.shuffle(order);
    std::vector<bool> train(ids.size(), false);
    for (std::size_t k = 0; k < n_train; ++k) {
        train[order[k]] = true;
    }
    std::string text = "case,split\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        text += ids[i] + (train[i] ? ",train\n" : ",test\n");
    }
    write_text_file(layout.split(), text);
    spdlog::info("split {} cases into {} train and {} test", ids.size(), n_train, ids.size() - n_train);
    return {layout.split()};
}

std::vector<fs::path> run_prior(const ExperimentConfig& config, const RunLayout& layout) {
    const auto split = read_split(layout.root);
    const auto train_cases = load_cases(layout, split.train);
    spdlog::info("training prior classifier on {} cases for {} epochs", train_cases.size(), config.prior.epochs);
    const auto result = prior::train_prior(train_cases, config.prior);
    spdlog::info("prior: best epoch {} with validation loss {}", result.best_epoch,
                 result.history.at(result.best_epoch - 1).validation_loss);

    fs::create_directories(layout.prior_dir());
    const auto checkpoint = layout.prior_dir() / kCheckpointFile;
    const auto history = layout.prior_dir() / kHistoryFile;
    nn::save_checkpoint(checkpoint, result.model.spec, result.model.state);
    std::string text = "epoch,anneal,train_loss,validation_loss,selected\n";
    for (const auto& e : result.history) {
        text += fmt::format("{},{},{},{},{}\n", e.epoch, format_number(e.anneal), format_number(e.train_loss),
                            format_number(e.validation_loss), e.epoch == result.best_epoch ? 1 : 0);
    }
    write_text_file(history, text);

    const auto saved = nn::load_checkpoint(checkpoint);
    const prior::PriorModel model{saved.spec, saved.state};
    std::vector<fs::path> outputs{checkpoint, history};
    for (const auto& id : read_case_index(layout)) {
        const auto dir = layout.case_dir(id);
        const auto c = load_cases(layout, {id}).front();
        prior::write_prior_map(dir, prior::predict_prior_map(model, c));
        outputs.push_back(dir / prior::kPriorProbabilityFile);
        outputs.push_back(dir / prior::kPriorUncertaintyFile);
    }
    return outputs;
}

std::vector<fs::path> run_model(const ExperimentConfig& config, const RunLayout& layout, const std::string& model) {
    const auto split = read_split(layout.root);
    const auto cases = load_cases(layout, split.train);
    std::vector<prior::PriorMap> priors;
    const bool baseline = model == kBaseline;
    if (!baseline) {
        for (std::size_t i = 0; i < cases.size(); ++i) {
            try {
                priors.push_back(prior::read_prior_map(layout.case_dir(cases[i].id), cases[i].partition));
            } catch (const Error& e) {
                throw PipelineError("missing prior map for " + model + " training case " + cases[i].id + ": " +
                                    e.what());
            }
        }
    }
    auto seg_config = config.seg;
    seg_config.baseline = baseline;
    spdlog::info("training {} on {} cases for {} epochs", model, cases.size(), seg_config.epochs);
    const auto observer = [&model](const seg::LossReport& r, const nn::ModelState&) {
        spdlog::info("{} epoch {}: J_sup {:.5f} J_reg {:.5f} J {:.5f} gate {:.3f} val {:.5f}", model, r.epoch,
                     r.j_sup, r.j_reg, r.j_total, r.gate_fraction, r.val_j);
    };
    seg::SegTrainResult result;
    try {
        result = seg::train_emredl(cases, priors, seg_config, observer);
    } catch (const ConfigError& e) {
        throw PipelineError(model + ": " + e.what());
    }
    spdlog::info("{}: best epoch {}", model, result.best_epoch);

    const auto dir = layout.model_dir(model);
    fs::create_directories(dir);
    nn::save_checkpoint(dir / kCheckpointFile, result.model.spec, result.model.state);
    std::string text = "epoch,j_sup,j_reg,j_total,gate_fraction,val_j,selected\n";
    for (const auto& r : result.history) {
        text += fmt::format("{},{},{},{},{},{},{}\n", r.epoch, format_number(r.j_sup), format_number(r.j_reg),
                            format_number(r.j_total), format_number(r.gate_fraction), format_number(r.val_j),
                            r.epoch == result.best_epoch ? 1 : 0);
    }
    write_text_file(dir / kHistoryFile, text);
    return {dir / kCheckpointFile, dir / kHistoryFile};
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct CaseEval {
    std::string id;
    bool train = false;
    const phantom::PhantomCase* data = nullptr;
    eval::EvalRegions regions;
    Volume<float> probability;
};

void gather_domain(const CaseEval& c, eval::Target t, std::vector<double>& scores, std::vector<std::uint8_t>& labels) {
    const auto domain = c.regions.domain(t);
    const auto& target = c.regions.target(t);
    for (std::size_t i = 0; i < domain.data.size(); ++i) {
        if (domain.data[i]) {
            scores.push_back(c.probability.data[i]);
            labels.push_back(target.data[i]);
        }
    }
}

double safe_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    try {
        return eval::roc_curve(scores, labels).auc;
    } catch (const eval::UndefinedMetricError&) {
        return kNaN;
    }
}

std::string metrics_row(const std::string& id, const std::string& model, eval::Target t, const std::string& split,
                        const eval::MetricsRecord& m) {
    return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", id, model, eval::target_name(t), split,
                       format_number(m.auc), format_number(m.sensitivity), format_number(m.specificity),
                       format_number(m.youden), format_number(m.mcc), format_number(m.dice), format_number(m.tau),
                       format_number(m.core_burden_cm3), format_number(m.infiltrated_burden_cm3));
}

eval::MetricsRecord undefined_record() {
    eval::MetricsRecord m;
    m.auc = m.sensitivity = m.specificity = m.youden = m.mcc = m.dice = kNaN;
    return m;
}

std::vector<double> mean_over(const phantom::PhantomCase& c, const Volume<std::uint8_t>& seg, const std::string& channel) {
    const auto& values = c.channel(channel).values.data;
    double in_sum = 0.0;
    double out_sum = 0.0;
    std::size_t in_n = 0;
    std::size_t out_n = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (c.partition.at(i) != Region::Roi2) {
            continue;
        }
        if (seg.data[i]) {
            in_sum += values[i];
            ++in_n;
        } else {
            out_sum += values[i];
            ++out_n;
        }
    }
    if (in_n == 0 || out_n == 0) {
        return {};
    }
    return {in_sum / static_cast<double>(in_n), out_sum / static_cast<double>(out_n)};
}

std::vector<fs::path> run_eval(const ExperimentConfig& config, const RunLayout& layout) {
    const auto split = read_split(layout.root);
    std::vector<std::string> ids = split.train;
    ids.insert(ids.end(), split.test.begin(), split.test.end());
    const auto cases = load_cases(layout, ids);

    std::vector<CaseEval> evals(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        evals[i].id = cases[i].id;
        evals[i].train = i < split.train.size();
        evals[i].data = &cases[i];
        evals[i].regions = eval::make_eval_regions(cases[i].partition, cases[i].truth_recurrence);
    }

    const std::array<eval::Target, 2> targets{eval::Target::Whole, eval::Target::Recurrence};
    const std::array<std::string, 2> splits{"train", "test"};
    std::map<std::string, std::string> metrics_text;
    for (const auto& s : splits) {
        metrics_text[s] = std::string(kMetricsColumns) + "\n";
    }
    std::string thresholds = "model,target,tau,train_youden,train_sensitivity,train_specificity\n";
    std::string burden = "case,model,split,true_core_cm3,true_infiltrated_cm3,core_cm3,infiltrated_cm3\n";
    std::string regression = "model,component,n,r,p,slope,intercept\n";
    std::string mrs = "model,metabolite,n,mean_infiltrated,mean_non_infiltrated,t,p\n";
    std::vector<fs::path> outputs;

    std::map<eval::Target, SvgPlot> roc_plots;
    for (const auto t : targets) {
        SvgPlot plot(fmt::format("Test ROC, {} region", eval::target_name(t)), "1 - specificity", "sensitivity");
        plot.set_x_range(0.0, 1.0);
        plot.set_y_range(0.0, 1.0);
        plot.add_line({0.0, 1.0}, {0.0, 1.0}, "chance");
        roc_plots.emplace(t, std::move(plot));
    }

    for (const auto& model_name : config.models) {
        const auto dir = layout.model_dir(model_name);
        nn::Checkpoint checkpoint;
        try {
            checkpoint = nn::load_checkpoint(dir / kCheckpointFile);
        } catch (const Error& e) {
            throw PipelineError("cannot load " + model_name + " checkpoint: " + e.what());
        }
        const seg::SegModel model{checkpoint.spec, checkpoint.state};
        spdlog::info("evaluating {} on {} cases", model_name, evals.size());
        for (auto& c : evals) {
            c.probability = seg::predict_volume(model, *c.data);
        }

        std::map<eval::Target, double> tau;
        for (const auto t : targets) {
            std::vector<double> scores;
            std::vector<std::uint8_t> labels;
            for (const auto& c : evals) {
                if (c.train) {
                    gather_domain(c, t, scores, labels);
                }
            }
            const auto curve = eval::roc_curve(scores, labels);
            const auto choice = eval::youden_threshold(curve.points);
            tau[t] = choice.threshold;
            thresholds += fmt::format("{},{},{},{},{},{}\n", model_name, eval::target_name(t),
                                      format_number(choice.threshold), format_number(choice.youden),
                                      format_number(choice.sensitivity), format_number(choice.specificity));

            for (const auto& s : splits) {
                const bool want_train = s == "train";
                eval::Confusion pooled;
                std::vector<double> pooled_scores;
                std::vector<std::uint8_t> pooled_labels;
                double core_sum = 0.0;
                double infiltrated_sum = 0.0;
                std::size_t n = 0;
                for (const auto& c : evals) {
                    if (c.train != want_train) {
                        continue;
                    }
                    const auto mask = seg::segment(c.probability, c.data->partition, tau[t]);
                    const auto conf = eval::confusion(mask, c.regions, t);
                    pooled.tp += conf.tp;
                    pooled.fp += conf.fp;
                    pooled.fn += conf.fn;
                    pooled.tn += conf.tn;
                    std::vector<double> case_scores;
                    std::vector<std::uint8_t> case_labels;
                    gather_domain(c, t, case_scores, case_labels);
                    pooled_scores.insert(pooled_scores.end(), case_scores.begin(), case_scores.end());
                    pooled_labels.insert(pooled_labels.end(), case_labels.begin(), case_labels.end());

                    eval::MetricsRecord record;
                    try {
                        record = eval::metrics_from_confusion(conf);
                    } catch (const eval::UndefinedMetricError&) {
                        record = undefined_record();
                    }
                    record.auc = safe_auc(case_scores, case_labels);
                    record.tau = tau[t];
                    const auto b = eval::tumor_burden(mask, c.data->partition);
                    record.core_burden_cm3 = b.core_cm3;
                    record.infiltrated_burden_cm3 = b.infiltrated_cm3;
                    core_sum += b.core_cm3;
                    infiltrated_sum += b.infiltrated_cm3;
                    ++n;
                    metrics_text[s] += metrics_row(c.id, model_name, t, s, record);
                }
                eval::MetricsRecord summary;
                try {
                    summary = eval::metrics_from_confusion(pooled);
                } catch (const eval::UndefinedMetricError&) {
                    summary = undefined_record();
                }
                summary.auc = safe_auc(pooled_scores, pooled_labels);
                summary.tau = tau[t];
                summary.core_burden_cm3 = n ? core_sum / static_cast<double>(n) : kNaN;
                summary.infiltrated_burden_cm3 = n ? infiltrated_sum / static_cast<double>(n) : kNaN;
                metrics_text[s] += metrics_row(kPooledRow, model_name, t, s, summary);

                if (!want_train && !pooled_scores.empty()) {
                    try {
                        const auto curve_test = eval::roc_curve(pooled_scores, pooled_labels);
                        const std::size_t step =
                            std::max<std::size_t>(1, curve_test.points.size() / kMaxRocPlotPoints);
                        std::vector<double> xs;
                        std::vector<double> ys;
                        for (std::size_t k = 0; k < curve_test.points.size(); ++k) {
                            if (k % step == 0 || k + 1 == curve_test.points.size()) {
                                xs.push_back(1.0 - curve_test.points[k].specificity);
                                ys.push_back(curve_test.points[k].sensitivity);
                            }
                        }
                        roc_plots.at(t).add_line(std::move(xs), std::move(ys),
                                                 fmt::format("{} (AUC {:.3f})", model_name, curve_test.auc));
                    } catch (const eval::UndefinedMetricError&) {
                    }
                }
            }
        }

        const double tau_burden = tau[eval::Target::Recurrence];
        std::vector<double> true_core;
        std::vector<double> true_infiltrated;
        std::vector<double> pred_core;
        std::vector<double> pred_infiltrated;
        std::vector<double> cho_in;
        std::vector<double> cho_out;
        std::vector<double> naa_in;
        std::vector<double> naa_out;
        const bool metabolites = !evals.empty() && evals.front().data->channel_count(phantom::ChannelRole::Metabolite) > 0;
        for (const auto& c : evals) {
            const auto mask = seg::segment(c.probability, c.data->partition, tau_burden);
            const auto b = eval::tumor_burden(mask, c.data->partition);
            const double cm3 = c.data->partition.voxel_volume_mm3() / 1000.0;
            const double tc = static_cast<double>(c.data->partition.count(Region::Roi1)) * cm3;
            const double ti = static_cast<double>(std::count(c.data->truth_recurrence.data.begin(),
                                                             c.data->truth_recurrence.data.end(), 1)) *
                              cm3;
            burden += fmt::format("{},{},{},{},{},{},{}\n", c.id, model_name, c.train ? "train" : "test",
                                  format_number(tc), format_number(ti), format_number(b.core_cm3),
                                  format_number(b.infiltrated_cm3));
            if (c.train) {
                continue;
            }
            true_core.push_back(tc);
            true_infiltrated.push_back(ti);
            pred_core.push_back(b.core_cm3);
            pred_infiltrated.push_back(b.infiltrated_cm3);
            if (metabolites) {
                const auto cho = mean_over(*c.data, mask, "cho");
                const auto naa = mean_over(*c.data, mask, "naa");
                if (!cho.empty()) {
                    cho_in.push_back(cho[0]);
                    cho_out.push_back(cho[1]);
                    naa_in.push_back(naa[0]);
                    naa_out.push_back(naa[1]);
                }
            }
        }

        std::optional<eval::Correlation> infiltrated_fit;
        for (const auto& [component, truth, pred] :
             {std::tuple{"core", &true_core, &pred_core}, std::tuple{"infiltrated", &true_infiltrated, &pred_infiltrated}}) {
            eval::Correlation r;
            r.n = truth->size();
            try {
                r = eval::pearson_regression(*truth, *pred);
                if (std::string_view(component) == "infiltrated") {
                    infiltrated_fit = r;
                }
            } catch (const Error& e) {
                spdlog::warn("{} {} burden correlation undefined: {}", model_name, component, e.what());
                r.r = r.p = r.slope = r.intercept = kNaN;
            }
            regression += fmt::format("{},{},{},{},{},{},{}\n", model_name, component, r.n, format_number(r.r),
                                      format_number(r.p), format_number(r.slope), format_number(r.intercept));
        }

        if (metabolites) {
            for (const auto& [name, in, out] : {std::tuple{"cho", &cho_in, &cho_out}, std::tuple{"naa", &naa_in, &naa_out}}) {
                eval::TTest test;
                test.n = in->size();
                double mean_in = kNaN;
                double mean_out = kNaN;
                if (!in->empty()) {
                    mean_in = std::accumulate(in->begin(), in->end(), 0.0) / static_cast<double>(in->size());
                    mean_out = std::accumulate(out->begin(), out->end(), 0.0) / static_cast<double>(out->size());
                }
                try {
                    test = eval::paired_ttest(*in, *out);
                } catch (const Error& e) {
                    spdlog::warn("{} {} paired t-test undefined: {}", model_name, name, e.what());
                    test.t = test.p = kNaN;
                }
                mrs += fmt::format("{},{},{},{},{},{},{}\n", model_name, name, test.n, format_number(mean_in),
                                   format_number(mean_out), format_number(test.t), format_number(test.p));
            }
        }

        SvgPlot scatter(fmt::format("Infiltrated burden, {} (test)", model_name), "ground truth (cm3)",
                        "segmentation (cm3)");
        scatter.add_points(true_infiltrated, pred_infiltrated, "cases");
        if (infiltrated_fit && !true_infiltrated.empty()) {
            const auto [lo, hi] = std::minmax_element(true_infiltrated.begin(), true_infiltrated.end());
            scatter.add_line({*lo, *hi},
                             {infiltrated_fit->intercept + infiltrated_fit->slope * *lo,
                              infiltrated_fit->intercept + infiltrated_fit->slope * *hi},
                             fmt::format("fit (r {:.3f})", infiltrated_fit->r));
        }
        const auto scatter_path = layout.root / fmt::format("burden_{}.svg", model_name);
        write_text_file(scatter_path, scatter.render());
        outputs.push_back(scatter_path);

        const auto history = read_csv(dir / kHistoryFile);
        SvgPlot loss(fmt::format("Training loss, {}", model_name), "epoch", "loss");
        for (const auto* column : {"j_sup", "j_reg", "j_total", "val_j"}) {
            std::vector<double> xs;
            std::vector<double> ys;
            for (const auto& row : history.rows) {
                xs.push_back(std::stod(row[history.column("epoch")]));
                ys.push_back(std::stod(row[history.column(column)]));
            }
            loss.add_line(std::move(xs), std::move(ys), column);
        }
        const auto loss_path = layout.root / fmt::format("loss_{}.svg", model_name);
        write_text_file(loss_path, loss.render());
        outputs.push_back(loss_path);
    }

    for (const auto t : targets) {
        const auto path = layout.root / fmt::format("roc_{}.svg", eval::target_name(t));
        write_text_file(path, roc_plots.at(t).render());
        outputs.push_back(path);
    }
    for (const auto& s : splits) {
        write_text_file(layout.metrics(s), metrics_text[s]);
        outputs.push_back(layout.metrics(s));
    }
    write_text_file(layout.thresholds(), thresholds);
    write_text_file(layout.burden(), burden);
    write_text_file(layout.burden_regression(), regression);
    write_text_file(layout.mrs(), mrs);
    for (const auto& p : {layout.thresholds(), layout.burden(), layout.burden_regression(), layout.mrs()}) {
        outputs.push_back(p);
    }
    return outputs;
}

} // namespace

CaseSplit read_split(const fs::path& run_dir) {
    CsvTable table;
    try {
        table = read_csv(run_dir / "split.csv");
    } catch (const Error& e) {
        throw PipelineError(std::string("cannot read case split: ") + e.what());
    }
    const auto id = table.column("case");
    const auto which = table.column("split");
    CaseSplit split;
    for (const auto& row : table.rows) {
        (row[which] == "train" ? split.train : split.test).push_back(row[id]);
    }
    return split;
}

fs::path run_experiment(const ExperimentConfig& config, const RunRequest& request) {
    config.validate();
    if (request.goal == Goal::Model && request.model != kEmredl && request.model != kBaseline) {
        throw ConfigError("unknown model '" + request.model + "' (expected emredl or baseline)");
    }
    const auto canonical = canonical_config(config);
    auto manifest = prepare_directory(config, request, canonical);
    const RunLayout layout{config.output_dir};

    for (const auto& stage : plan_stages(config, request)) {
        const auto key = stage_key(manifest, stage);
        if (manifest.up_to_date(stage.name, key)) {
            spdlog::info("stage {} is up to date", stage.name);
            continue;
        }
        manifest.erase(stage.name);
        manifest.save();
        spdlog::info("running stage {}", stage.name);
        std::vector<fs::path> outputs;
        if (stage.name == "cases") {
            outputs = run_cases(config, layout);
        } else if (stage.name == "split") {
            outputs = run_split(config, layout);
        } else if (stage.name == "prior") {
            outputs = run_prior(config, layout);
        } else if (stage.name == "eval") {
            outputs = run_eval(config, layout);
        } else {
            outputs = run_model(config, layout, stage.name.substr(std::string("model_").size()));
        }
        manifest.record(stage.name, key, outputs);
        manifest.save();
    }
    return layout.root;
}

} // namespace emseg::pipeline
