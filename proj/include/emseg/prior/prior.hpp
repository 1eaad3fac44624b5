#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "emseg/nn/network.hpp"
#include "emseg/phantom/phantom.hpp"
#include "emseg/rng.hpp"

namespace emseg::prior {

struct PriorTrainConfig {
    double learning_rate = 1e-4;
    int epochs = 100;
    std::size_t batch_size = 4096;
    /// 0 selects 10% of the epoch budget (at least 1).
    int anneal_epochs = 0;
    double validation_fraction = 0.25;
    std::uint64_t seed = 1;

    /// Throws ContractError unless every field is positive and the fraction lies in (0, 1).
    void validate() const;
    int effective_anneal_epochs() const;
    /// min(1, epoch / anneal_epochs) for 1-based epochs.
    double anneal_at(int epoch) const;
};

/// Labeled voxels, row-major [n, features]. Label 1 marks the tumor class.
struct VoxelSet {
    std::size_t features = 0;
    std::vector<float> values;
    std::vector<std::uint8_t> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t count(std::uint8_t label) const;
};

/// ROI1 voxels as class 1 and ROI3 voxels as class 0, described by the
/// physiological channels of each case. Cases are visited in order, voxels in
/// raster order.
VoxelSet collect_prior_voxels(const std::vector<phantom::PhantomCase>& cases);

/// Endless minibatch source drawing floor(size/2) rows of class 1 and the rest
/// of class 0. Each class is a shuffled stream that reshuffles after every pass.
class BalancedSampler {
public:
    BalancedSampler(std::vector<std::size_t> class0_rows, std::vector<std::size_t> class1_rows,
                    std::uint64_t seed);
    /// Overwrites rows and labels with one minibatch of rows.size() entries.
    void fill(std::span<std::size_t> rows, std::span<std::uint8_t> labels);

private:
    std::size_t next(int label);

    Rng rng_;
    std::array<std::vector<std::size_t>, 2> rows_;
    std::array<std::size_t, 2> cursor_{};
};

/// Fully connected P -> P -> P -> 2 with ReLU activations and a raw evidence head.
nn::NetworkSpec prior_network(int features);

/// Bias of both evidence outputs at initialization. A zero bias leaves about half
/// of the inputs with no evidence gradient, and the tumor output can die before it learns.
inline constexpr float kInitialEvidence = 1.0f;

/// Glorot-initialized prior network whose evidence head starts at kInitialEvidence.
nn::ModelState initial_prior_state(const nn::NetworkSpec& spec, std::uint64_t seed);

struct PriorModel {
    nn::NetworkSpec spec;
    nn::ModelState state;
};

struct PriorEpoch {
    int epoch = 0;
    double anneal = 0.0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
};

struct PriorTrainResult {
    PriorModel model;
    std::vector<PriorEpoch> history;
    int best_epoch = 0;
    VoxelSet validation;
};

/// Class-balanced EDL loss at anneal 1: the mean of the per-class mean losses.
double validation_loss(const PriorModel& model, const VoxelSet& voxels);

/// Fraction of voxels whose tumor probability falls on the side of 0.5 given by the label.
double accuracy(const PriorModel& model, const VoxelSet& voxels);

/// Mean EDL uncertainty over the voxels.
double mean_uncertainty(const PriorModel& model, const VoxelSet& voxels);

PriorTrainResult train_prior(const VoxelSet& voxels, const PriorTrainConfig& config);
PriorTrainResult train_prior(const std::vector<phantom::PhantomCase>& cases,
                             const PriorTrainConfig& config);

/// Probability of the tumor class and uncertainty for every ROI2 voxel.
struct PriorMap {
    Extents extents;
    /// Linear indices of the ROI2 voxels, ascending.
    std::vector<std::size_t> voxels;
    std::vector<float> probability;
    std::vector<float> uncertainty;

    std::size_t size() const { return voxels.size(); }
    bool operator==(const PriorMap&) const = default;
};

PriorMap predict_prior_map(const PriorModel& model, const phantom::PhantomCase& c);

inline constexpr const char* kPriorProbabilityFile = "prior_p.f32";
inline constexpr const char* kPriorUncertaintyFile = "prior_u.f32";

/// Full-extent rasters holding 0 outside ROI2, registered in the case manifest.
void write_prior_map(const std::filesystem::path& case_dir, const PriorMap& map);
PriorMap read_prior_map(const std::filesystem::path& case_dir, const RegionPartition& partition);

} // namespace emseg::prior
