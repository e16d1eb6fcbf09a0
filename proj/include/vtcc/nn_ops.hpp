#pragma once

// Neural-network layers on top of the tensor core: convolution, batch and
// layer normalization, activations and softmax.

#include <vector>

#include "vtcc/tensor.hpp"

namespace vtcc {

enum class NormMode { kTrain, kEval };

enum class Activation { kRelu, kGelu };

// Cross-correlation. `bias` may be undefined. Output spatial size is
// floor((H + 2*padding - kh) / stride) + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride,
                 int padding);

template <typename T>
struct BatchNormStats {
    std::vector<T> running_mean;
    std::vector<T> running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    static BatchNormStats fresh(int64_t channels);
};

// Normalizes over every axis except axis 1. Accepts [N×C] and [N×C×H×W].
// Train mode uses batch statistics and updates `stats`; eval mode reads them.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, NormMode mode);

inline constexpr double kLayerNormEps = 1e-6;

// Normalizes each row over the last dim, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
// tanh approximation: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> activation(const Tensor<T>& x, Activation kind);

template <typename T> Tensor<T> softmax(const Tensor<T>& x, int64_t axis);

}  // namespace vtcc
