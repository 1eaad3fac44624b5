#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "emseg/phantom/phantom.hpp"

namespace emseg::phantom {

struct ConstantChannelFlag {
    std::size_t case_index = 0;
    std::size_t channel_index = 0;
};

struct HistogramMatchResult {
    std::vector<PhantomCase> cases;
    /// Reference case chosen for each channel (structural and physiological
    /// channels only; metabolite channels are left untouched and hold SIZE_MAX).
    std::vector<std::size_t> reference_case;
    std::vector<ConstantChannelFlag> constant_channels;
};

/// Per channel: histogram every case over its brain voxels, take the case whose
/// histogram is closest (L2) to the mean histogram as reference, rescale the
/// reference to [0, 1], then map all other cases onto it by CDF matching.
HistogramMatchResult histogram_match(const std::vector<PhantomCase>& cases, int bins = 256);

/// Maps `values` through its own piecewise-linear histogram CDF and the inverse
/// CDF of `reference` (already in [0, 1]). Monotone non-decreasing.
std::vector<float> match_to_reference(std::span<const float> values, std::span<const float> reference, int bins);

} // namespace emseg::phantom
