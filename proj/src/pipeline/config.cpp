#include "emseg/pipeline/config.hpp"

#include <algorithm>
#include <charconv>
#include <fmt/format.h>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "emseg/binary_io.hpp"
#include "emseg/rng.hpp"

namespace emseg::pipeline {
namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

template <typename T>
T parse_number(const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw std::invalid_argument("'" + text + "' is not a valid number");
    }
    return value;
}

bool parse_bool(const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") {
        return true;
    }
    if (text == "false" || text == "0" || text == "no") {
        return false;
    }
    throw std::invalid_argument("'" + text + "' is not a boolean");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

struct Seeds {
    std::optional<std::uint64_t> phantom;
    std::optional<std::uint64_t> prior;
    std::optional<std::uint64_t> seg;
};

template <typename T, typename Field>
Setter number(Field field) {
    return [field](ExperimentConfig& c, const std::string& v) { field(c) = parse_number<T>(v); };
}

std::map<std::string, Setter, std::less<>> setters(Seeds& seeds) {
    std::map<std::string, Setter, std::less<>> s;
    s["seed"] = number<std::uint64_t>([](ExperimentConfig& c) -> auto& { return c.seed; });
    s["output_dir"] = [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; };
    s["train_fraction"] = number<double>([](ExperimentConfig& c) -> auto& { return c.train_fraction; });
    s["models"] = [](ExperimentConfig& c, const std::string& v) { c.models = split_list(v); };
    s["overwrite"] = [](ExperimentConfig& c, const std::string& v) { c.overwrite = parse_bool(v); };
    s["resume"] = [](ExperimentConfig& c, const std::string& v) { c.resume = parse_bool(v); };

    s["phantom.extent"] = number<int>([](ExperimentConfig& c) -> auto& { return c.phantom.extent; });
    s["phantom.slices"] = number<int>([](ExperimentConfig& c) -> auto& { return c.phantom.slices; });
    s["phantom.spacing_mm"] = [](ExperimentConfig& c, const std::string& v) {
        const auto parts = split_list(v);
        if (parts.size() != 3) {
            throw std::invalid_argument("expected three comma-separated spacings");
        }
        for (std::size_t i = 0; i < 3; ++i) {
            c.phantom.spacing_mm[i] = parse_number<double>(parts[i]);
        }
    };
    s["phantom.structural_channels"] =
        number<int>([](ExperimentConfig& c) -> auto& { return c.phantom.structural_channels; });
    s["phantom.physiological_channels"] =
        number<int>([](ExperimentConfig& c) -> auto& { return c.phantom.physiological_channels; });
    s["phantom.blur_radius"] =
        number<double>([](ExperimentConfig& c) -> auto& { return c.phantom.physiological_blur_radius; });
    s["phantom.structural_noise"] =
        number<double>([](ExperimentConfig& c) -> auto& { return c.phantom.structural_noise; });
    s["phantom.physiological_noise"] =
        number<double>([](ExperimentConfig& c) -> auto& { return c.phantom.physiological_noise; });
    s["phantom.metabolite_noise"] =
        number<double>([](ExperimentConfig& c) -> auto& { return c.phantom.metabolite_noise; });
    s["phantom.decay_length"] =
        number<double>([](ExperimentConfig& c) -> auto& { return c.phantom.decay_length; });
    s["phantom.core_radius"] = [](ExperimentConfig& c, const std::string& v) {
        const auto parts = split_list(v);
        if (parts.size() != 2) {
            throw std::invalid_argument("expected 'lo, hi' fractions of the extent");
        }
        c.phantom.core_radius = {parse_number<double>(parts[0]), parse_number<double>(parts[1])};
    };
    s["phantom.halo_width"] = number<double>([](ExperimentConfig& c) -> auto& { return c.phantom.halo_width; });
    s["phantom.metabolites"] = [](ExperimentConfig& c, const std::string& v) {
        c.phantom.metabolites = parse_bool(v);
    };
    s["phantom.case_count"] = number<int>([](ExperimentConfig& c) -> auto& { return c.phantom.case_count; });
    s["phantom.histogram_bins"] = number<int>([](ExperimentConfig& c) -> auto& { return c.histogram_bins; });
    s["phantom.seed"] = [&seeds](ExperimentConfig&, const std::string& v) {
        seeds.phantom = parse_number<std::uint64_t>(v);
    };

    s["prior.learning_rate"] =
        number<double>([](ExperimentConfig& c) -> auto& { return c.prior.learning_rate; });
    s["prior.epochs"] = number<int>([](ExperimentConfig& c) -> auto& { return c.prior.epochs; });
    s["prior.batch_size"] = number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.prior.batch_size; });
    s["prior.anneal_epochs"] = number<int>([](ExperimentConfig& c) -> auto& { return c.prior.anneal_epochs; });
    s["prior.validation_fraction"] =
        number<double>([](ExperimentConfig& c) -> auto& { return c.prior.validation_fraction; });
    s["prior.seed"] = [&seeds](ExperimentConfig&, const std::string& v) {
        seeds.prior = parse_number<std::uint64_t>(v);
    };

    s["seg.lambda"] = number<double>([](ExperimentConfig& c) -> auto& { return c.seg.lambda; });
    s["seg.learning_rate"] = number<double>([](ExperimentConfig& c) -> auto& { return c.seg.learning_rate; });
    s["seg.epochs"] = number<int>([](ExperimentConfig& c) -> auto& { return c.seg.epochs; });
    s["seg.batch_slices"] = number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.seg.batch_slices; });
    s["seg.validation_fraction"] =
        number<double>([](ExperimentConfig& c) -> auto& { return c.seg.validation_fraction; });
    s["seg.base_width"] = number<int>([](ExperimentConfig& c) -> auto& { return c.seg.base_width; });
    s["seg.dissimilarity"] = [](ExperimentConfig& c, const std::string& v) {
        c.seg.dissimilarity = seg::parse_dissimilarity(v);
    };
    s["seg.seed"] = [&seeds](ExperimentConfig&, const std::string& v) {
        seeds.seg = parse_number<std::uint64_t>(v);
    };
    return s;
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

} // namespace

bool ExperimentConfig::runs(std::string_view model) const {
    return std::find(models.begin(), models.end(), model) != models.end();
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& what) {
        throw ConfigError("config key '" + key + "': " + what);
    };
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        fail("train_fraction", "must lie in (0, 1)");
    }
    if (models.empty()) {
        fail("models", "at least one model is required");
    }
    for (const auto& m : models) {
        if (m != kEmredl && m != kBaseline) {
            fail("models", "unknown model '" + m + "' (expected emredl or baseline)");
        }
    }
    if (histogram_bins < 32) {
        fail("phantom.histogram_bins", "must be at least 32");
    }
    if (output_dir.empty()) {
        fail("output_dir", "must not be empty");
    }
    const auto n_train = static_cast<long>(std::lround(train_fraction * phantom.case_count));
    if (n_train < 2 || n_train >= phantom.case_count) {
        fail("train_fraction", "must leave at least 2 training cases and 1 test case");
    }
    try {
        phantom.validate();
        prior.validate();
        seg.validate();
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }
}

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
    ExperimentConfig config;
    Seeds seeds;
    const auto table = setters(seeds);
    std::istringstream in{std::string(text)};
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string content = trim(line);
        if (content.empty()) {
            continue;
        }
        const auto where = source + ":" + std::to_string(number);
        const auto eq = content.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where + ": expected 'key = value', got '" + content + "'");
        }
        const std::string key = trim(content.substr(0, eq));
        const std::string value = trim(content.substr(eq + 1));
        const auto it = table.find(key);
        if (it == table.end()) {
            if (key.rfind("eval.", 0) == 0) {
                throw ConfigError(where + ": unknown evaluation key '" + key + "'");
            }
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
        try {
            it->second(config, value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(where + ": " + key + ": " + e.what());
        }
    }
    config.phantom.seed = seeds.phantom.value_or(child_seed(config.seed, 1));
    config.prior.seed = seeds.prior.value_or(child_seed(config.seed, 2));
    config.seg.seed = seeds.seg.value_or(child_seed(config.seed, 3));
    config.validate();
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        throw ConfigError("cannot read config " + path.string() + ": " + e.what());
    }
    return parse_config(text, path.string());
}

std::string canonical_config(const ExperimentConfig& c) {
    std::string models;
    for (std::size_t i = 0; i < c.models.size(); ++i) {
        models += (i ? "," : "") + c.models[i];
    }
    const auto& p = c.phantom;
    std::string out;
    out += "seed = " + std::to_string(c.seed) + "\n";
    out += "train_fraction = " + fmt_double(c.train_fraction) + "\n";
    out += "models = " + models + "\n";
    out += "phantom.extent = " + std::to_string(p.extent) + "\n";
    out += "phantom.slices = " + std::to_string(p.slices) + "\n";
    out += fmt::format("phantom.spacing_mm = {},{},{}\n", p.spacing_mm[0], p.spacing_mm[1], p.spacing_mm[2]);
    out += "phantom.structural_channels = " + std::to_string(p.structural_channels) + "\n";
    out += "phantom.physiological_channels = " + std::to_string(p.physiological_channels) + "\n";
    out += "phantom.blur_radius = " + fmt_double(p.physiological_blur_radius) + "\n";
    out += "phantom.structural_noise = " + fmt_double(p.structural_noise) + "\n";
    out += "phantom.physiological_noise = " + fmt_double(p.physiological_noise) + "\n";
    out += "phantom.metabolite_noise = " + fmt_double(p.metabolite_noise) + "\n";
    out += "phantom.decay_length = " + fmt_double(p.decay_length) + "\n";
    out += fmt::format("phantom.core_radius = {},{}\n", p.core_radius[0], p.core_radius[1]);
    out += "phantom.halo_width = " + fmt_double(p.halo_width) + "\n";
    out += std::string("phantom.metabolites = ") + (p.metabolites ? "true" : "false") + "\n";
    out += "phantom.case_count = " + std::to_string(p.case_count) + "\n";
    out += "phantom.histogram_bins = " + std::to_string(c.histogram_bins) + "\n";
    out += "phantom.seed = " + std::to_string(p.seed) + "\n";
    out += "prior.learning_rate = " + fmt_double(c.prior.learning_rate) + "\n";
    out += "prior.epochs = " + std::to_string(c.prior.epochs) + "\n";
    out += "prior.batch_size = " + std::to_string(c.prior.batch_size) + "\n";
    out += "prior.anneal_epochs = " + std::to_string(c.prior.anneal_epochs) + "\n";
    out += "prior.validation_fraction = " + fmt_double(c.prior.validation_fraction) + "\n";
    out += "prior.seed = " + std::to_string(c.prior.seed) + "\n";
    out += "seg.lambda = " + fmt_double(c.seg.lambda) + "\n";
    out += "seg.learning_rate = " + fmt_double(c.seg.learning_rate) + "\n";
    out += "seg.epochs = " + std::to_string(c.seg.epochs) + "\n";
    out += "seg.batch_slices = " + std::to_string(c.seg.batch_slices) + "\n";
    out += "seg.validation_fraction = " + fmt_double(c.seg.validation_fraction) + "\n";
    out += "seg.base_width = " + std::to_string(c.seg.base_width) + "\n";
    out += "seg.dissimilarity = " + std::string(seg::dissimilarity_name(c.seg.dissimilarity)) + "\n";
    out += "seg.seed = " + std::to_string(c.seg.seed) + "\n";
    return out;
}

} // namespace emseg::pipeline
