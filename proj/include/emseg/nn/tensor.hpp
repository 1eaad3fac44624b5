#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "emseg/errors.hpp"

namespace emseg::nn {

/// Row-major dense tensor. Dense layers consume [N, F]; convolutional layers
/// consume [N, C, H, W].
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, T fill = T{})
        : shape(std::move(s)), data(element_count(shape), fill) {}
    Tensor(std::vector<std::size_t> s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != element_count(shape)) {
            throw StructuralError("tensor data length does not match its shape");
        }
    }

    static std::size_t element_count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t batch() const { return shape.empty() ? 0 : shape[0]; }
    std::span<T> span() { return data; }
    std::span<const T> span() const { return data; }

    bool operator==(const Tensor&) const = default;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& in) {
    Tensor<To> out;
    out.shape = in.shape;
    out.data.assign(in.data.begin(), in.data.end());
    return out;
}

std::string shape_string(const std::vector<std::size_t>& shape);

} // namespace emseg::nn
