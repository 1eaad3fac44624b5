#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "emseg/pipeline/config.hpp"

namespace emseg::pipeline {

enum class Goal { Cases, Prior, Model, Evaluate };

struct RunRequest {
    Goal goal = Goal::Evaluate;
    /// Model to train when goal is Model.
    std::string model;
    /// Treat an existing run directory as resumable even without the resume flag.
    bool allow_existing = false;
};

/// File locations inside a run directory.
struct RunLayout {
    std::filesystem::path root;

    std::filesystem::path manifest() const { return root / "manifest.txt"; }
    std::filesystem::path config() const { return root / "config.txt"; }
    std::filesystem::path cases() const { return root / "cases"; }
    std::filesystem::path case_index() const { return root / "cases" / "index.csv"; }
    std::filesystem::path case_dir(const std::string& id) const { return root / "cases" / id; }
    std::filesystem::path split() const { return root / "split.csv"; }
    std::filesystem::path prior_dir() const { return root / "prior"; }
    std::filesystem::path model_dir(const std::string& model) const { return root / "models" / model; }
    std::filesystem::path metrics(const std::string& split) const { return root / ("metrics_" + split + ".csv"); }
    std::filesystem::path thresholds() const { return root / "thresholds.csv"; }
    std::filesystem::path burden() const { return root / "burden.csv"; }
    std::filesystem::path burden_regression() const { return root / "burden_regression.csv"; }
    std::filesystem::path mrs() const { return root / "mrs.csv"; }
    std::filesystem::path summary() const { return root / "summary.txt"; }
};

inline constexpr const char* kMetricsColumns =
    "case,model,target,split,auc,sensitivity,specificity,youden,mcc,dice,tau,core_burden_cm3,"
    "infiltrated_burden_cm3";
/// Case label of the pooled summary row in the metrics tables.
inline constexpr const char* kPooledRow = "ALL";

struct CaseSplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

/// Runs every stage needed for `request`, skipping stages whose recorded
/// outputs still match their checksums and inputs. Each stage reads its
/// inputs back from disk, so fresh and resumed runs produce identical files.
/// Throws PipelineError when the directory cannot be used or a stage input is
/// missing. Returns the run directory.
std::filesystem::path run_experiment(const ExperimentConfig& config, const RunRequest& request = {});

CaseSplit read_split(const std::filesystem::path& run_dir);

} // namespace emseg::pipeline
