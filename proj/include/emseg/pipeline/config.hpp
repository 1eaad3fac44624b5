#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "emseg/phantom/phantom.hpp"
#include "emseg/prior/prior.hpp"
#include "emseg/seg/segmenter.hpp"

namespace emseg::pipeline {

inline constexpr std::string_view kEmredl = "emredl";
inline constexpr std::string_view kBaseline = "baseline";

struct ExperimentConfig {
    phantom::PhantomSpec phantom;
    int histogram_bins = 256;
    prior::PriorTrainConfig prior;
    seg::SegTrainConfig seg;
    double train_fraction = 0.5;
    std::vector<std::string> models{std::string(kEmredl), std::string(kBaseline)};
    std::filesystem::path output_dir = "run";
    std::uint64_t seed = 1;
    bool overwrite = false;
    bool resume = false;

    bool runs(std::string_view model) const;
    bool needs_prior() const { return runs(kEmredl); }
    /// Throws ConfigError naming the offending key.
    void validate() const;
};

/// Flat `key = value` lines; `#` starts a comment. Keys without a section
/// prefix are top-level (seed, output_dir, train_fraction, models, overwrite,
/// resume); the rest carry phantom., prior., seg. or eval. prefixes. Component
/// seeds default to child seeds of `seed` unless set explicitly. Errors name
/// the source and line number.
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text of every setting that influences results (output location
/// and run flags excluded). Parsing it yields the same experiment.
std::string canonical_config(const ExperimentConfig& config);

} // namespace emseg::pipeline
