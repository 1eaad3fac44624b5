#include "emseg/nn/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emseg/rng.hpp"

namespace emseg::nn {

GradientCheckResult gradient_check(const NetworkSpec& spec, const ModelState& state, const Tensor<double>& batch,
                                   const LossClosure<double>& loss, const GradientCheckOptions& options) {
    if (!(options.h >= 1e-6 && options.h <= 1e-3)) {
        throw ContractError("gradient_check: h must lie in [1e-6, 1e-3]");
    }
    std::vector<double> params(state.parameters.begin(), state.parameters.end());
    const auto analytic = evaluate_with_gradients<double>(spec, params, batch, loss);

    std::vector<std::size_t> which(params.size());
    std::iota(which.begin(), which.end(), std::size_t{0});
    if (options.subset && *options.subset < params.size()) {
        if (*options.subset < 100) throw ContractError("gradient_check: a random subset must hold >= 100 parameters");
        Rng rng(options.seed);
        rng.shuffle(which);
        which.resize(*options.subset);
        std::sort(which.begin(), which.end());
    }

    auto loss_at = [&](const std::vector<double>& p) {
        Tensor<double> out = forward<double>(spec, p, batch);
        Tensor<double> scratch(out.shape);
        const double value = loss(out, scratch);
        if (!std::isfinite(value)) throw NumericError("gradient_check: non-finite perturbed loss");
        return value;
    };

    GradientCheckResult result;
    for (const std::size_t i : which) {
        const double saved = params[i];
        params[i] = saved + options.h;
        const double plus = loss_at(params);
        params[i] = saved - options.h;
        const double minus = loss_at(params);
        params[i] = saved;
        const double numeric = (plus - minus) / (2.0 * options.h);
        const double a = analytic.gradient[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
        const double err = std::abs(a - numeric) / denom;
        if (err > result.max_relative_error) {
            result.max_relative_error = err;
            result.worst_parameter = i;
        }
        ++result.checked;
    }
    return result;
}

} // namespace emseg::nn
