#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace emseg::pipeline {

inline constexpr double kRequiredAucGap = 0.05;
inline constexpr double kRequiredAuc = 0.85;
inline constexpr double kRequiredBurdenR = 0.90;
inline constexpr double kRequiredMrsP = 0.01;

struct CriterionCheck {
    std::string name;
    /// False when the run lacks a model the check needs.
    bool evaluated = false;
    bool passed = false;
    std::string detail;
};

struct Report {
    std::string text;
    std::vector<CriterionCheck> checks;

    const CriterionCheck& check(const std::string& name) const;
};

/// Builds summary.txt from the CSV artifacts of a completed run and writes it
/// into the run directory. Numbers are copied from the CSV cells unchanged.
/// Throws PipelineError naming every missing artifact.
Report emit_report(const std::filesystem::path& run_dir);

} // namespace emseg::pipeline
