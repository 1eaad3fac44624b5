#include "emseg/nn/adam.hpp"

#include <cmath>
#include <string>

namespace emseg::nn {

void adam_update(ModelState& state, std::span<const float> gradient, const AdamConfig& config) {
    const std::size_t n = state.parameters.size();
    if (gradient.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
        throw StructuralError("adam: gradient length " + std::to_string(gradient.size()) +
                              " does not match parameter length " + std::to_string(n));
    }
    if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0) ||
        !(config.eps > 0.0)) {
        throw ContractError("adam: betas must lie in [0, 1) and eps must be positive");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = gradient[i];
        const double m = config.beta1 * state.first_moment[i] + (1.0 - config.beta1) * g;
        const double v = config.beta2 * state.second_moment[i] + (1.0 - config.beta2) * g * g;
        state.first_moment[i] = static_cast<float>(m);
        state.second_moment[i] = static_cast<float>(v);
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        state.parameters[i] =
            static_cast<float>(state.parameters[i] - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps));
    }
}

ModelState adam_step(const ModelState& state, std::span<const float> gradient, const AdamConfig& config) {
    ModelState next = state;
    adam_update(next, gradient, config);
    return next;
}

} // namespace emseg::nn
