#include "vtcc/heads.hpp"

#include "vtcc/ops.hpp"

namespace vtcc {

template <typename T>
Projector<T> Projector<T>::create(int64_t in, int64_t hidden, int64_t out, SeededRng& rng) {
    Projector p;
    p.fc0 = Linear<T>::create(in, hidden, false, rng);
    p.bn0 = BatchNorm<T>::create(hidden);
    p.fc1 = Linear<T>::create(hidden, hidden, false, rng);
    p.bn1 = BatchNorm<T>::create(hidden);
    p.fc2 = Linear<T>::create(hidden, out, true, rng);
    return p;
}

template <typename T>
Tensor<T> Projector<T>::operator()(const Tensor<T>& h, NormMode mode) {
    if (h.rank() != 2) throw ShapeError("projector expects [N x d], got " + shape_str(h.shape()));
    const Tensor<T> a = relu(bn0(fc0(h), mode));
    const Tensor<T> b = relu(bn1(fc1(a), mode));
    return fc2(b);
}

template <typename T>
void Projector<T>::visit(const std::string& prefix, ParamVisitor<T>& v) {
    fc0.visit(prefix + ".fc0", v);
    bn0.visit(prefix + ".bn0", v);
    fc1.visit(prefix + ".fc1", v);
    bn1.visit(prefix + ".bn1", v);
    fc2.visit(prefix + ".fc2", v);
}

template <typename T>
Tensor<T> instance_projector_forward(const Tensor<T>& h, Projector<T>& params, NormMode mode) {
    return params(h, mode);
}

template <typename T>
Tensor<T> cluster_projector_forward(const Tensor<T>& h, Projector<T>& params, NormMode mode) {
    return softmax(params(h, mode), -1);
}

#define VTCC_INSTANTIATE_HEADS(T)                                                                 \
    template struct Projector<T>;                                                                \
    template Tensor<T> instance_projector_forward<T>(const Tensor<T>&, Projector<T>&, NormMode); \
    template Tensor<T> cluster_projector_forward<T>(const Tensor<T>&, Projector<T>&, NormMode);

VTCC_INSTANTIATE_HEADS(float)
VTCC_INSTANTIATE_HEADS(double)

}  // namespace vtcc
