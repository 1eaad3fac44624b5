#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "emseg/prior/prior.hpp"
#include "emseg/volume.hpp"

namespace emseg::seg {

enum class Dissimilarity { AbsoluteDifference };

std::string_view dissimilarity_name(Dissimilarity g);
Dissimilarity parse_dissimilarity(std::string_view name);

double dissimilarity(Dissimilarity g, double a, double b);

/// Pseudo-labels for the ROI2 voxels of one case, in the order of PriorMap::voxels.
struct PseudoLabelField {
    std::vector<float> probability;
    std::vector<std::uint8_t> gate;

    std::size_t size() const { return probability.size(); }
    std::size_t accepted() const;
};

/// True when the model prediction is close enough to the prior to replace it.
bool gate_accepts(Dissimilarity g, double p_prior, double p_model, double delta);

/// `prediction` holds the model probability of each ROI2 voxel in prior order.
/// Epoch 1 takes the prior everywhere; later epochs take the prediction where
/// gate_accepts holds. Epochs are 1-based.
PseudoLabelField e_step(const prior::PriorMap& prior, std::span<const float> prediction, int epoch,
                        Dissimilarity g = Dissimilarity::AbsoluteDifference);

inline constexpr double kProbabilityClamp = 1e-7;

struct LossReport {
    int epoch = 0;
    double j_sup = 0.0;
    double j_reg = 0.0;
    double j_total = 0.0;
    double gate_fraction = 0.0;
    double val_j = 0.0;
};

enum class GradientSpace { Probability, Logit };

/// Core of the composite loss over a flat set of voxels. `region` holds the
/// Region code per voxel and `target` the label per voxel (used for ROI2 only;
/// ROI1 counts as 1 and ROI3 as 0). Background is ignored. When `grad` is
/// non-empty it receives d J / d p, or d J / d logit for GradientSpace::Logit
/// where p is a sigmoid of the logit.
template <typename T>
LossReport composite_loss_terms(std::span<const T> prediction, std::span<const std::uint8_t> region,
                                std::span<const float> target, double lambda, std::span<T> grad = {},
                                GradientSpace space = GradientSpace::Probability);

/// J_sup + lambda * J_reg for a full-raster prediction of one case.
LossReport composite_loss(std::span<const float> prediction, const RegionPartition& partition,
                          const prior::PriorMap& roi2, const PseudoLabelField& pseudo, double lambda);

/// Dense per-voxel target raster: 1 on ROI1, pseudo-label on ROI2, 0 elsewhere.
std::vector<float> dense_targets(const RegionPartition& partition, const prior::PriorMap& roi2,
                                 const PseudoLabelField& pseudo);

} // namespace emseg::seg
