#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "emseg/nn/network.hpp"
#include "emseg/phantom/phantom.hpp"
#include "emseg/prior/prior.hpp"
#include "emseg/seg/em.hpp"

namespace emseg::seg {

struct SegTrainConfig {
    double lambda = 1.0;
    double learning_rate = 1e-4;
    int epochs = 200;
    std::size_t batch_slices = 8;
    Dissimilarity dissimilarity = Dissimilarity::AbsoluteDifference;
    double validation_fraction = 0.25;
    std::uint64_t seed = 1;
    /// Trains on J_sup alone with the E-step disabled.
    bool baseline = false;
    int base_width = 8;

    /// Throws ContractError on out-of-range values.
    void validate() const;
};

/// Depth-2 U-Net: two 3x3 conv layers per level, 2x2 max-pool, nearest
/// upsampling followed by a conv, skip concatenation, 1x1 sigmoid head.
nn::NetworkSpec unet_spec(int input_channels, int base_width = 8);

struct SegModel {
    nn::NetworkSpec spec;
    nn::ModelState state;
};

/// Input channels fed to the segmenter: structural then physiological, in storage order.
std::vector<std::size_t> segmenter_channels(const phantom::PhantomCase& c);

/// Slice z of case `c` as a [1, C, H, W] block appended to `out`.
void append_slice(const phantom::PhantomCase& c, std::span<const std::size_t> channels, int z,
                  std::vector<float>& out);

/// Per-voxel probability for the whole case.
Volume<float> predict_volume(const SegModel& model, const phantom::PhantomCase& c);

/// {p > tau} restricted to ROI1 and ROI2.
Volume<std::uint8_t> segment(const Volume<float>& probability, const RegionPartition& partition,
                             double tau);
Volume<std::uint8_t> segment(const SegModel& model, const phantom::PhantomCase& c, double tau);

struct SegTrainResult {
    SegModel model;
    std::vector<LossReport> history;
    int best_epoch = 0;
    std::vector<std::size_t> train_cases;
    std::vector<std::size_t> validation_cases;
};

/// Called after every epoch with the epoch report and the current (not best) state.
using EpochObserver = std::function<void(const LossReport&, const nn::ModelState&)>;

/// `priors[i]` belongs to `cases[i]`; it may be empty when config.baseline is set.
SegTrainResult train_emredl(const std::vector<phantom::PhantomCase>& cases,
                            const std::vector<prior::PriorMap>& priors, const SegTrainConfig& config,
                            const EpochObserver& observer = {});

} // namespace emseg::seg
