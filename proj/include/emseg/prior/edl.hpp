#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "emseg/nn/network.hpp"

namespace emseg::prior {

inline constexpr int kClasses = 2;

using Pair = std::array<double, kClasses>;

/// Subjective-logic view of a two-class evidence vector. Index 1 is the tumor class.
struct EvidentialOutput {
    Pair evidence{};
    Pair alpha{};
    Pair belief{};
    Pair probability{};
    double strength = 0.0;
    double uncertainty = 0.0;
};

/// ReLU on the raw outputs, then alpha = e + 1. Throws NumericError on non-finite input.
EvidentialOutput edl_transform(double raw0, double raw1);

/// Expected squared error under Beta(alpha) plus anneal * KL(Beta(alpha~) || Beta(1, 1))
/// where alpha~ removes the evidence of the true class. When `grad_alpha` is
/// given it receives d loss / d alpha.
double edl_sample_loss(const Pair& alpha, const Pair& label, double anneal,
                       Pair* grad_alpha = nullptr);

/// Mean of edl_sample_loss over the batch. Throws ContractError if any alpha
/// component is below 1 or anneal lies outside [0, 1].
double edl_loss(std::span<const Pair> alpha, std::span<const Pair> labels, double anneal);

/// Expected squared error alone (the anneal = 0 loss).
double expected_squared_error(const Pair& alpha, const Pair& label);

/// KL(Beta(a) || Beta(1, 1)).
double kl_to_uniform(const Pair& a);

/// Loss over raw network outputs [N, 2] for class indices `labels`.
/// `weights` (optional, one per sample) replaces the plain batch mean by a
/// weighted sum.
template <typename T>
nn::LossClosure<T> edl_loss_closure(std::span<const std::uint8_t> labels, double anneal,
                                    std::span<const double> weights = {});

} // namespace emseg::prior
