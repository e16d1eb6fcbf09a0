#pragma once

// Instance and cluster projectors: linear → BN → ReLU → linear → BN → ReLU → linear.
// The cluster projector ends with a softmax over K.

#include "vtcc/layers.hpp"

namespace vtcc {

template <typename T>
struct Projector {
    Linear<T> fc0;  // no bias, BatchNorm follows
    BatchNorm<T> bn0;
    Linear<T> fc1;  // no bias, BatchNorm follows
    BatchNorm<T> bn1;
    Linear<T> fc2;

    static Projector create(int64_t in, int64_t hidden, int64_t out, SeededRng& rng);
    // The MLP without any terminal nonlinearity: [N×in] -> [N×out].
    Tensor<T> operator()(const Tensor<T>& h, NormMode mode);
    void visit(const std::string& prefix, ParamVisitor<T>& v);
};

template <typename T>
Tensor<T> instance_projector_forward(const Tensor<T>& h, Projector<T>& params, NormMode mode);

// Rows of the result are probability vectors over the K clusters.
template <typename T>
Tensor<T> cluster_projector_forward(const Tensor<T>& h, Projector<T>& params, NormMode mode);

}  // namespace vtcc
