#include "emseg/prior/edl.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>
#include <string>

#include "emseg/errors.hpp"

namespace emseg::prior {
namespace {

void check_alpha(const Pair& alpha) {
    for (double a : alpha) {
        if (!(a >= 1.0) || !std::isfinite(a)) {
            throw ContractError("edl_loss: alpha components must be finite and >= 1");
        }
    }
}

void check_anneal(double anneal) {
    if (!(anneal >= 0.0 && anneal <= 1.0)) {
        throw ContractError("edl_loss: anneal must lie in [0, 1]");
    }
}

} // namespace

EvidentialOutput edl_transform(double raw0, double raw1) {
    if (!std::isfinite(raw0) || !std::isfinite(raw1)) {
        throw NumericError("edl_transform: non-finite raw output");
    }
    EvidentialOutput o;
    o.evidence = {raw0 > 0.0 ? raw0 : 0.0, raw1 > 0.0 ? raw1 : 0.0};
    o.alpha = {o.evidence[0] + 1.0, o.evidence[1] + 1.0};
    o.strength = o.alpha[0] + o.alpha[1];
    for (int k = 0; k < kClasses; ++k) {
        o.belief[k] = o.evidence[k] / o.strength;
        o.probability[k] = o.alpha[k] / o.strength;
    }
    o.uncertainty = kClasses / o.strength;
    return o;
}

double expected_squared_error(const Pair& alpha, const Pair& label) {
    const double s = alpha[0] + alpha[1];
    double total = 0.0;
    for (int k = 0; k < kClasses; ++k) {
        const double p = alpha[k] / s;
        total += (label[k] - p) * (label[k] - p) + alpha[k] * (s - alpha[k]) / (s * s * (s + 1.0));
    }
    return total;
}

double kl_to_uniform(const Pair& a) {
    using boost::math::digamma;
    const double s = a[0] + a[1];
    double kl = std::lgamma(s);
    const double psi_s = digamma(s);
    for (double ak : a) {
        kl += -std::lgamma(ak) + (ak - 1.0) * (digamma(ak) - psi_s);
    }
    return kl;
}

double edl_sample_loss(const Pair& alpha, const Pair& label, double anneal, Pair* grad_alpha) {
    check_alpha(alpha);
    check_anneal(anneal);
    double loss = expected_squared_error(alpha, label);

    if (grad_alpha) {
        const double s = alpha[0] + alpha[1];
        const Pair p{alpha[0] / s, alpha[1] / s};
        const double sum_p2 = p[0] * p[0] + p[1] * p[1];
        const double fit = (label[0] - p[0]) * p[0] + (label[1] - p[1]) * p[1];
        for (int j = 0; j < kClasses; ++j) {
            const double d_fit = (-2.0 * (label[j] - p[j]) + 2.0 * fit) / s;
            const double d_var = -2.0 * (p[j] - sum_p2) / (s * (s + 1.0)) -
                                 (1.0 - sum_p2) / ((s + 1.0) * (s + 1.0));
            (*grad_alpha)[j] = d_fit + d_var;
        }
    }

    if (anneal > 0.0) {
        const Pair tilde{label[0] + (1.0 - label[0]) * alpha[0],
                         label[1] + (1.0 - label[1]) * alpha[1]};
        loss += anneal * kl_to_uniform(tilde);
        if (grad_alpha) {
            using boost::math::trigamma;
            const double s = tilde[0] + tilde[1];
            const double tri_s = trigamma(s);
            for (int j = 0; j < kClasses; ++j) {
                const double d_tilde = (tilde[j] - 1.0) * trigamma(tilde[j]) - (s - kClasses) * tri_s;
                (*grad_alpha)[j] += anneal * d_tilde * (1.0 - label[j]);
            }
        }
    }
    return loss;
}

double edl_loss(std::span<const Pair> alpha, std::span<const Pair> labels, double anneal) {
    if (alpha.size() != labels.size() || alpha.empty()) {
        throw StructuralError("edl_loss: alpha and labels must be non-empty and congruent");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        total += edl_sample_loss(alpha[i], labels[i], anneal);
    }
    return total / static_cast<double>(alpha.size());
}

template <typename T>
nn::LossClosure<T> edl_loss_closure(std::span<const std::uint8_t> labels, double anneal,
                                    std::span<const double> weights) {
    check_anneal(anneal);
    return [labels, anneal, weights](const nn::Tensor<T>& out, nn::Tensor<T>& grad) -> double {
        const std::size_t n = out.batch();
        if (out.rank() != 2 || out.shape[1] != kClasses || labels.size() != n ||
            (!weights.empty() && weights.size() != n)) {
            throw StructuralError("edl loss: expected raw outputs [" + std::to_string(labels.size()) +
                                  ", 2], got " + nn::shape_string(out.shape));
        }
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r0 = static_cast<double>(out.data[2 * i]);
            const double r1 = static_cast<double>(out.data[2 * i + 1]);
            if (!std::isfinite(r0) || !std::isfinite(r1)) {
                grad.data[2 * i] = T{0};
                grad.data[2 * i + 1] = T{0};
                total += r0 + r1;
                continue;
            }
            const Pair alpha{(r0 > 0.0 ? r0 : 0.0) + 1.0, (r1 > 0.0 ? r1 : 0.0) + 1.0};
            const Pair label{labels[i] ? 0.0 : 1.0, labels[i] ? 1.0 : 0.0};
            Pair g{};
            const double w = weights.empty() ? 1.0 / static_cast<double>(n) : weights[i];
            total += w * edl_sample_loss(alpha, label, anneal, &g);
            grad.data[2 * i] = static_cast<T>(r0 > 0.0 ? w * g[0] : 0.0);
            grad.data[2 * i + 1] = static_cast<T>(r1 > 0.0 ? w * g[1] : 0.0);
        }
        return total;
    };
}

template nn::LossClosure<float> edl_loss_closure<float>(std::span<const std::uint8_t>, double,
                                                        std::span<const double>);
template nn::LossClosure<double> edl_loss_closure<double>(std::span<const std::uint8_t>, double,
                                                          std::span<const double>);

} // namespace emseg::prior
