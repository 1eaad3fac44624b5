#pragma once

#include <cstdint>
#include <optional>

#include "emseg/nn/network.hpp"

namespace emseg::nn {

struct GradientCheckOptions {
    double h = 1e-4;
    /// Check every parameter when unset; otherwise a seeded random subset of
    /// this size (at least 100).
    std::optional<std::size_t> subset;
    std::uint64_t seed = 0;
    /// Denominator floor of the relative error, so a pair of (near-)zero
    /// derivatives does not divide by zero.
    double floor = 1e-6;
};

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_parameter = 0;
    std::size_t checked = 0;
};

/// Central finite differences against evaluate_with_gradients, both evaluated
/// in double precision from the state's parameters.
/// relative error = |analytic - numeric| / max(|analytic|, |numeric|, floor)
GradientCheckResult gradient_check(const NetworkSpec& spec, const ModelState& state, const Tensor<double>& batch,
                                   const LossClosure<double>& loss, const GradientCheckOptions& options = {});

} // namespace emseg::nn
