#pragma once

// Parameterized layers. Each layer owns its tensors and reports them through
// a visitor with dotted names ("blocks.0.attn.qkv.weight"), which checkpoints
// and the optimizer use as the canonical parameter order.

#include <functional>
#include <string>
#include <vector>

#include "vtcc/nn_ops.hpp"
#include "vtcc/rng.hpp"
#include "vtcc/tensor.hpp"

namespace vtcc {

inline constexpr double kInitStddev = 0.02;

template <typename T>
struct ParamVisitor {
    std::function<void(const std::string&, Tensor<T>&)> param;
    // Non-trainable state such as BatchNorm running statistics.
    std::function<void(const std::string&, std::vector<T>&)> buffer;
};

template <typename T>
Tensor<T> truncated_normal_tensor(Shape shape, SeededRng& rng, double stddev = kInitStddev);

template <typename T>
struct Linear {
    Tensor<T> weight;  // [in×out]
    Tensor<T> bias;    // [out], undefined when built without bias

    static Linear create(int64_t in, int64_t out, bool with_bias, SeededRng& rng);
    // Applies to the last dim of an input of any rank >= 2.
    Tensor<T> operator()(const Tensor<T>& x) const;
    void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <typename T>
struct Conv2d {
    Tensor<T> weight;  // [out×in×k×k]
    Tensor<T> bias;
    int stride = 1;
    int padding = 0;

    static Conv2d create(int64_t in, int64_t out, int kernel, int stride, int padding, bool with_bias,
                         SeededRng& rng);
    Tensor<T> operator()(const Tensor<T>& x) const;
    void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <typename T>
struct BatchNorm {
    Tensor<T> gamma;
    Tensor<T> beta;
    BatchNormStats<T> stats;

    static BatchNorm create(int64_t channels);
    Tensor<T> operator()(const Tensor<T>& x, NormMode mode);
    void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <typename T>
struct LayerNorm {
    Tensor<T> gamma;
    Tensor<T> beta;  // a constant zero, not a parameter, when built without offset

    static LayerNorm create(int64_t dim, bool with_offset = true);
    Tensor<T> operator()(const Tensor<T>& x) const;
    void visit(const std::string& prefix, ParamVisitor<T>& v);
};

}  // namespace vtcc
