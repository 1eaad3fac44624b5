#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emseg/nn/tensor.hpp"

namespace emseg::nn {

enum class LayerKind { Dense, Conv, Relu, Sigmoid, MaxPool, Upsample, Push, Concat };

/// One layer of a sequential network. `Push` saves the current activation on
/// a skip stack; `Concat` pops it and appends its channels to the current
/// activation. This is enough to express U-Net style skips in a flat list.
struct LayerDesc {
    LayerKind kind = LayerKind::Relu;
    int fan_in = 0;
    int fan_out = 0;
    int kernel = 0;

    bool operator==(const LayerDesc&) const = default;
};

LayerDesc dense(int fan_in, int fan_out);
LayerDesc conv(int fan_in, int fan_out, int kernel);
LayerDesc relu();
LayerDesc sigmoid();
LayerDesc max_pool();
LayerDesc upsample();
LayerDesc push();
LayerDesc concat();

std::string_view layer_name(LayerKind kind);

enum class HeadKind { SigmoidProbability, RawEvidence };

struct NetworkSpec {
    std::vector<LayerDesc> layers;
    HeadKind head = HeadKind::RawEvidence;

    /// Throws StructuralError when adjacent layers do not fit together, the
    /// skip stack is unbalanced, or the head does not match the last layer.
    void validate() const;

    bool spatial() const;
    int input_width() const;
    int output_width() const;
    std::size_t parameter_count() const;
    /// Offset of each layer's parameters in the flat vector (weights, then biases).
    std::vector<std::size_t> parameter_offsets() const;

    /// Text descriptor, one layer per line; inverse of parse().
    std::string describe() const;
    static NetworkSpec parse(std::string_view text);

    bool operator==(const NetworkSpec&) const = default;
};

/// Flat parameters plus Adam moment buffers.
struct ModelState {
    std::vector<float> parameters;
    std::vector<float> first_moment;
    std::vector<float> second_moment;
    std::uint64_t step = 0;

    /// Glorot-uniform weights, zero biases, zero moments.
    static ModelState initialize(const NetworkSpec& spec, std::uint64_t seed);
    static ModelState zeros(const NetworkSpec& spec);

    bool operator==(const ModelState&) const = default;
};

/// Loss on the network output. Must fill `grad_output` (same shape as the
/// output) with d loss / d output and return the loss value.
template <typename T>
using LossClosure = std::function<double(const Tensor<T>& output, Tensor<T>& grad_output)>;

template <typename T>
struct Evaluation {
    double loss = 0.0;
    std::vector<T> gradient;
};

template <typename T>
Tensor<T> forward(const NetworkSpec& spec, std::span<const T> parameters, const Tensor<T>& batch);

template <typename T>
Evaluation<T> evaluate_with_gradients(const NetworkSpec& spec, std::span<const T> parameters,
                                      const Tensor<T>& batch, const LossClosure<T>& loss);

/// Same as evaluate_with_gradients for networks ending in a sigmoid, except
/// that the loss receives probabilities and writes d loss / d logit, and the
/// final sigmoid is skipped on the way back. Saturated outputs keep a
/// gradient this way.
template <typename T>
Evaluation<T> evaluate_with_logit_gradients(const NetworkSpec& spec, std::span<const T> parameters,
                                            const Tensor<T>& batch, const LossClosure<T>& loss);

/// Distance of the batch from the nearest non-differentiable point: the smallest
/// |input| of any ReLU and the smallest gap between the two largest values of
/// any max-pool window. Finite-difference checks with a step well below this
/// margin never straddle a kink.
template <typename T>
double kink_margin(const NetworkSpec& spec, std::span<const T> parameters, const Tensor<T>& batch);

inline Tensor<float> forward(const NetworkSpec& spec, const ModelState& state, const Tensor<float>& batch) {
    return forward<float>(spec, state.parameters, batch);
}

inline Evaluation<float> evaluate_with_gradients(const NetworkSpec& spec, const ModelState& state,
                                                 const Tensor<float>& batch, const LossClosure<float>& loss) {
    return evaluate_with_gradients<float>(spec, state.parameters, batch, loss);
}

inline Evaluation<float> evaluate_with_logit_gradients(const NetworkSpec& spec, const ModelState& state,
                                                       const Tensor<float>& batch, const LossClosure<float>& loss) {
    return evaluate_with_logit_gradients<float>(spec, state.parameters, batch, loss);
}

} // namespace emseg::nn
