#include "vtcc/layers.hpp"

#include "vtcc/ops.hpp"

namespace vtcc {

template <typename T>
Tensor<T> truncated_normal_tensor(Shape shape, SeededRng& rng, double stddev) {
    std::vector<T> values(static_cast<size_t>(shape_numel(shape)));
    for (auto& v : values) v = static_cast<T>(rng.truncated_normal(stddev));
    return Tensor<T>::from_vector(std::move(shape), std::move(values), true);
}

template <typename T>
Linear<T> Linear<T>::create(int64_t in, int64_t out, bool with_bias, SeededRng& rng) {
    Linear layer;
    layer.weight = truncated_normal_tensor<T>({in, out}, rng);
    if (with_bias) layer.bias = Tensor<T>::zeros({out}, true);
    return layer;
}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
    const int64_t in = weight.dim(0);
    if (x.rank() < 2 || x.dim(-1) != in) {
        throw ShapeError("linear expects [...x" + std::to_string(in) + "], got " + shape_str(x.shape()));
    }
    Tensor<T> y;
    if (x.rank() == 2) {
        y = matmul(x, weight);
    } else {
        Shape out_shape = x.shape();
        out_shape.back() = weight.dim(1);
        y = reshape(matmul(reshape(x, {x.numel() / in, in}), weight), out_shape);
    }
    return bias.defined() ? add(y, bias) : y;
}

template <typename T>
void Linear<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
    v.param(prefix + ".weight", weight);
    if (bias.defined()) v.param(prefix + ".bias", bias);
}

template <typename T>
Conv2d<T> Conv2d<T>::create(int64_t in, int64_t out, int kernel, int stride, int padding, bool with_bias,
                            SeededRng& rng) {
    Conv2d layer;
    layer.weight = truncated_normal_tensor<T>({out, in, kernel, kernel}, rng);
    if (with_bias) layer.bias = Tensor<T>::zeros({out}, true);
    layer.stride = stride;
    layer.padding = padding;
    return layer;
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
    return conv2d(x, weight, bias, stride, padding);
}

template <typename T>
void Conv2d<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
    v.param(prefix + ".weight", weight);
    if (bias.defined()) v.param(prefix + ".bias", bias);
}

template <typename T>
BatchNorm<T> BatchNorm<T>::create(int64_t channels) {
    return BatchNorm{Tensor<T>::full({channels}, T(1), true), Tensor<T>::zeros({channels}, true),
                     BatchNormStats<T>::fresh(channels)};
}

template <typename T>
Tensor<T> BatchNorm<T>::operator()(const Tensor<T>& x, NormMode mode) {
    return batch_norm(x, gamma, beta, stats, mode);
}

template <typename T>
void BatchNorm<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
    v.param(prefix + ".gamma", gamma);
    v.param(prefix + ".beta", beta);
    if (v.buffer) {
        v.buffer(prefix + ".running_mean", stats.running_mean);
        v.buffer(prefix + ".running_var", stats.running_var);
    }
}

template <typename T>
LayerNorm<T> LayerNorm<T>::create(int64_t dim, bool with_offset) {
    return LayerNorm{Tensor<T>::full({dim}, T(1), true), Tensor<T>::zeros({dim}, with_offset)};
}

template <typename T>
Tensor<T> LayerNorm<T>::operator()(const Tensor<T>& x) const {
    return layer_norm(x, gamma, beta);
}

template <typename T>
void LayerNorm<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
    v.param(prefix + ".gamma", gamma);
    if (beta.requires_grad()) v.param(prefix + ".beta", beta);
}

#define VTCC_INSTANTIATE_LAYERS(T)                                                       \
    template Tensor<T> truncated_normal_tensor<T>(Shape, SeededRng&, double);           \
    template struct Linear<T>;                                                          \
    template struct Conv2d<T>;                                                          \
    template struct BatchNorm<T>;                                                       \
    template struct LayerNorm<T>;

VTCC_INSTANTIATE_LAYERS(float)
VTCC_INSTANTIATE_LAYERS(double)

}  // namespace vtcc
