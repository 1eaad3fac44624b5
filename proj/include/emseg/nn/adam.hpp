#pragma once

#include <span>

#include "emseg/nn/network.hpp"

namespace emseg::nn {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update. Returns the next state; `state` is untouched.
ModelState adam_step(const ModelState& state, std::span<const float> gradient, const AdamConfig& config);

/// In-place variant used by the training loops.
void adam_update(ModelState& state, std::span<const float> gradient, const AdamConfig& config);

} // namespace emseg::nn
