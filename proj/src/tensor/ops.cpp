#include "vtcc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "op_builder.hpp"
#include "vtcc/parallel.hpp"

namespace vtcc {

using detail::grad_target;
using detail::make_result;

namespace {

enum class Bcast { kSame, kScalar, kSuffix, kRow };

std::optional<Bcast> classify(const Shape& out, const Shape& s) {
    if (s == out) return Bcast::kSame;
    if (shape_numel(s) == 1) return Bcast::kScalar;
    if (s.size() < out.size() && std::equal(s.begin(), s.end(), out.end() - static_cast<int64_t>(s.size()))) {
        return Bcast::kSuffix;
    }
    if (s.size() == out.size() && s.back() == 1 &&
        std::equal(s.begin(), s.end() - 1, out.begin())) {
        return Bcast::kRow;
    }
    return std::nullopt;
}

struct BroadcastPlan {
    Shape out;
    Bcast a_kind = Bcast::kSame;
    Bcast b_kind = Bcast::kSame;
    int64_t a_inner = 1;
    int64_t b_inner = 1;
};

int64_t inner_extent(Bcast kind, const Shape& out, const Shape& s) {
    switch (kind) {
        case Bcast::kSuffix: return shape_numel(s);
        case Bcast::kRow: return out.back();
        default: return 1;
    }
}

BroadcastPlan plan_broadcast(const char* op, const Shape& a, const Shape& b) {
    BroadcastPlan plan;
    if (auto kb = classify(a, b)) {
        plan.out = a;
        plan.b_kind = *kb;
        plan.b_inner = inner_extent(*kb, a, b);
    } else if (auto ka = classify(b, a)) {
        plan.out = b;
        plan.a_kind = *ka;
        plan.a_inner = inner_extent(*ka, b, a);
    } else {
        throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
    return plan;
}

// f(i, j): i indexes the full operand, j the broadcast one.
template <typename F>
void pair_loop(int64_t n, Bcast kind, int64_t inner, F&& f) {
    switch (kind) {
        case Bcast::kSame:
            for (int64_t i = 0; i < n; ++i) f(i, i);
            break;
        case Bcast::kScalar:
            for (int64_t i = 0; i < n; ++i) f(i, int64_t{0});
            break;
        case Bcast::kSuffix:
            for (int64_t o = 0; o < n; o += inner)
                for (int64_t k = 0; k < inner; ++k) f(o + k, k);
            break;
        case Bcast::kRow:
            for (int64_t o = 0, r = 0; o < n; o += inner, ++r)
                for (int64_t k = 0; k < inner; ++k) f(o + k, r);
            break;
    }
}

// f(i, ja, jb)
template <typename F>
void for_pairs(const BroadcastPlan& p, int64_t n, F&& f) {
    if (p.a_kind == Bcast::kSame) {
        pair_loop(n, p.b_kind, p.b_inner, [&](int64_t i, int64_t j) { f(i, i, j); });
    } else {
        pair_loop(n, p.a_kind, p.a_inner, [&](int64_t i, int64_t j) { f(i, j, i); });
    }
}

template <typename T, typename Fwd, typename DA, typename DB>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, DA da, DB db) {
    const BroadcastPlan plan = plan_broadcast(name, a.shape(), b.shape());
    const int64_t n = shape_numel(plan.out);
    std::vector<T> out(static_cast<size_t>(n));
    const T* x = a.data().data();
    const T* y = b.data().data();
    for_pairs(plan, n, [&](int64_t i, int64_t ja, int64_t jb) { out[i] = fwd(x[ja], y[jb]); });
    return make_result<T>(name, plan.out, std::move(out), {&a, &b}, [plan, n, da, db](Node<T>& self) {
        const T* x = self.inputs[0]->data.data();
        const T* y = self.inputs[1]->data.data();
        const T* z = self.data.data();
        const T* g = self.grad.data();
        if (Node<T>* ta = grad_target(self, 0)) {
            T* ga = ta->grad_buffer().data();
            for_pairs(plan, n, [&](int64_t i, int64_t ja, int64_t jb) { ga[ja] += g[i] * da(x[ja], y[jb], z[i]); });
        }
        if (Node<T>* tb = grad_target(self, 1)) {
            T* gb = tb->grad_buffer().data();
            for_pairs(plan, n, [&](int64_t i, int64_t ja, int64_t jb) { gb[jb] += g[i] * db(x[ja], y[jb], z[i]); });
        }
    });
}

// dz/dx as a function of (x, z).
template <typename T, typename Fwd, typename D>
Tensor<T> unary_op(const char* name, const Tensor<T>& a, Fwd fwd, D d) {
    const int64_t n = a.numel();
    std::vector<T> out(static_cast<size_t>(n));
    const T* x = a.data().data();
    for (int64_t i = 0; i < n; ++i) out[i] = fwd(x[i]);
    return make_result<T>(name, a.shape(), std::move(out), {&a}, [n, d](Node<T>& self) {
        Node<T>* t = grad_target(self, 0);
        if (t == nullptr) return;
        const T* x = t->data.data();
        const T* z = self.data.data();
        const T* g = self.grad.data();
        T* gx = t->grad_buffer().data();
        for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * d(x[i], z[i]);
    });
}

struct AxisSplit {
    int64_t outer = 1;
    int64_t extent = 1;
    int64_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, int64_t axis) {
    AxisSplit s;
    for (int64_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

Shape reduced_shape(const Shape& shape, int64_t axis, bool keepdim) {
    Shape out = shape;
    if (keepdim) {
        out[axis] = 1;
    } else {
        out.erase(out.begin() + axis);
        if (out.empty()) out.push_back(1);
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() == b.shape()) {
        const int64_t n = a.numel();
        std::vector<T> out(static_cast<size_t>(n));
        const T* x = a.data().data();
        const T* y = b.data().data();
        for (int64_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
        return make_result<T>("add", a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
            if (Node<T>* tb = grad_target(self, 1)) tb->accumulate_grad(std::span<const T>(self.grad));
            if (Node<T>* ta = grad_target(self, 0)) ta->accumulate_grad(std::move(self.grad));
        });
    }
    return binary_op<T>(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op<T>(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); }, [](T, T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op<T>(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; }, [](T x, T, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return binary_op<T>(
        "div", a, b, [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
        [](T, T y, T z) { return -z / y; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
    return unary_op<T>("neg", x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
    return unary_op<T>("add_scalar", x, [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T value) {
    return unary_op<T>("mul_scalar", x, [value](T v) { return v * value; }, [value](T, T) { return value; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return unary_op<T>("exp", x, [](T v) { return std::exp(v); }, [](T, T z) { return z; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    return unary_op<T>(
        "log", x, [](T v) { return std::log(v > T(kLogClamp) ? v : T(kLogClamp)); },
        [](T v, T) { return v > T(kLogClamp) ? T(1) / v : T(0); });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
    return unary_op<T>(
        "sqrt", x, [](T v) { return std::sqrt(v); }, [](T, T z) { return z > T(0) ? T(0.5) / z : T(0); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return unary_op<T>("square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = 0;
    for (T v : x.data()) total += v;
    const int64_t n = x.numel();
    return make_result<T>("sum", Shape{1}, std::vector<T>{total}, {&x}, [n](Node<T>& self) {
        Node<T>* t = grad_target(self, 0);
        if (t == nullptr) return;
        const T g = self.grad[0];
        T* gx = t->grad_buffer().data();
        for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, int64_t axis, bool keepdim) {
    axis = normalize_axis(axis, x.rank());
    const AxisSplit s = split_axis(x.shape(), axis);
    std::vector<T> out(static_cast<size_t>(s.outer * s.inner), T(0));
    const T* in = x.data().data();
    for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t e = 0; e < s.extent; ++e)
            for (int64_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += in[(o * s.extent + e) * s.inner + i];
    return make_result<T>("sum_axis", reduced_shape(x.shape(), axis, keepdim), std::move(out), {&x}, [s](Node<T>& self) {
        Node<T>* t = grad_target(self, 0);
        if (t == nullptr) return;
        const T* g = self.grad.data();
        T* gx = t->grad_buffer().data();
        for (int64_t o = 0; o < s.outer; ++o)
            for (int64_t e = 0; e < s.extent; ++e)
                for (int64_t i = 0; i < s.inner; ++i) gx[(o * s.extent + e) * s.inner + i] += g[o * s.inner + i];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return mul_scalar(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, int64_t axis, bool keepdim) {
    const int64_t extent = x.dim(axis);
    return mul_scalar(sum(x, axis, keepdim), T(1) / static_cast<T>(extent));
}

template <typename T>
Tensor<T> logsumexp(const Tensor<T>& x, int64_t axis, bool keepdim) {
    axis = normalize_axis(axis, x.rank());
    const AxisSplit s = split_axis(x.shape(), axis);
    std::vector<T> out(static_cast<size_t>(s.outer * s.inner));
    const T* in = x.data().data();
    for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t i = 0; i < s.inner; ++i) {
            T peak = -std::numeric_limits<T>::infinity();
            for (int64_t e = 0; e < s.extent; ++e) peak = std::max(peak, in[(o * s.extent + e) * s.inner + i]);
            if (!std::isfinite(peak)) {
                out[o * s.inner + i] = peak;
                continue;
            }
            T acc = 0;
            for (int64_t e = 0; e < s.extent; ++e) acc += std::exp(in[(o * s.extent + e) * s.inner + i] - peak);
            out[o * s.inner + i] = peak + std::log(acc);
        }
    }
    return make_result<T>("logsumexp", reduced_shape(x.shape(), axis, keepdim), std::move(out), {&x}, [s](Node<T>& self) {
        Node<T>* t = grad_target(self, 0);
        if (t == nullptr) return;
        const T* g = self.grad.data();
        const T* lse = self.data.data();
        const T* in = t->data.data();
        T* gx = t->grad_buffer().data();
        for (int64_t o = 0; o < s.outer; ++o)
            for (int64_t e = 0; e < s.extent; ++e)
                for (int64_t i = 0; i < s.inner; ++i) {
                    const int64_t idx = (o * s.extent + e) * s.inner + i;
                    const int64_t r = o * s.inner + i;
                    if (std::isfinite(lse[r])) gx[idx] += g[r] * std::exp(in[idx] - lse[r]);
                }
    });
}

template <typename T>
Tensor<T> l2_norm(const Tensor<T>& x, int64_t axis, bool keepdim) {
    axis = normalize_axis(axis, x.rank());
    const AxisSplit s = split_axis(x.shape(), axis);
    std::vector<T> out(static_cast<size_t>(s.outer * s.inner), T(0));
    const T* in = x.data().data();
    for (int64_t o = 0; o < s.outer; ++o)
        for (int64_t e = 0; e < s.extent; ++e)
            for (int64_t i = 0; i < s.inner; ++i) {
                const T v = in[(o * s.extent + e) * s.inner + i];
                out[o * s.inner + i] += v * v;
            }
    for (T& v : out) v = std::sqrt(v);
    return make_result<T>("l2_norm", reduced_shape(x.shape(), axis, keepdim), std::move(out), {&x}, [s](Node<T>& self) {
        Node<T>* t = grad_target(self, 0);
        if (t == nullptr) return;
        const T* g = self.grad.data();
        const T* norm = self.data.data();
        const T* in = t->data.data();
        T* gx = t->grad_buffer().data();
        for (int64_t o = 0; o < s.outer; ++o)
            for (int64_t e = 0; e < s.extent; ++e)
                for (int64_t i = 0; i < s.inner; ++i) {
                    const int64_t r = o * s.inner + i;
                    if (norm[r] > T(0)) {
                        const int64_t idx = (o * s.extent + e) * s.inner + i;
                        gx[idx] += g[r] * in[idx] / norm[r];
                    }
                }
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("reshape: dims must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<T> out(x.data().begin(), x.data().end());
    return make_result<T>("reshape", std::move(shape), std::move(out), {&x}, [](Node<T>& self) {
        // The node's own gradient is released right after this call, so it can be handed over.
        if (Node<T>* t = grad_target(self, 0)) t->accumulate_grad(std::move(self.grad));
    });
}

namespace {

// Visits every output element of a permutation, passing (output index, input index).
template <typename F>
void permute_walk(const Shape& in_shape, const std::vector<int64_t>& axes, F&& f) {
    const size_t rank = in_shape.size();
    std::vector<int64_t> in_strides(rank, 1);
    for (size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
    std::vector<int64_t> out_shape(rank), stride(rank);
    for (size_t i = 0; i < rank; ++i) {
        out_shape[i] = in_shape[static_cast<size_t>(axes[i])];
        stride[i] = in_strides[static_cast<size_t>(axes[i])];
    }
    const int64_t n = shape_numel(in_shape);
    const int64_t last = out_shape[rank - 1];
    const int64_t last_stride = stride[rank - 1];
    std::vector<int64_t> counter(rank, 0);
    int64_t offset = 0;
    for (int64_t i = 0; i < n; i += last) {
        for (int64_t k = 0; k < last; ++k) f(i + k, offset + k * last_stride);
        for (size_t d = rank - 1; d-- > 0;) {
            offset += stride[d];
            if (++counter[d] < out_shape[d]) break;
            offset -= stride[d] * out_shape[d];
            counter[d] = 0;
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int64_t>& axes) {
    const int64_t rank = x.rank();
    if (static_cast<int64_t>(axes.size()) != rank) {
        throw ShapeError("permute: " + std::to_string(axes.size()) + " axes for tensor " + shape_str(x.shape()));
    }
    std::vector<int64_t> resolved(axes.size());
    std::vector<bool> used(axes.size(), false);
    Shape out_shape(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) {
        resolved[i] = normalize_axis(axes[i], rank);
        if (used[static_cast<size_t>(resolved[i])]) throw ShapeError("permute: repeated axis");
        used[static_cast<size_t>(resolved[i])] = true;
        out_shape[i] = x.shape()[static_cast<size_t>(resolved[i])];
    }
    std::vector<T> out(static_cast<size_t>(x.numel()));
    const T* in = x.data().data();
    permute_walk(x.shape(), resolved, [&](int64_t o, int64_t i) { out[o] = in[i]; });
    Shape in_shape = x.shape();
    return make_result<T>("permute", std::move(out_shape), std::move(out), {&x},
                          [in_shape, resolved](Node<T>& self) {
                              Node<T>* t = grad_target(self, 0);
                              if (t == nullptr) return;
                              T* gx = t->grad_buffer().data();
                              const T* g = self.grad.data();
                              permute_walk(in_shape, resolved, [&](int64_t o, int64_t i) { gx[i] += g[o]; });
                          });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
    if (x.rank() < 2) throw ShapeError("transpose: rank < 2 for " + shape_str(x.shape()));
    return transpose(x, -2, -1);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int64_t axis0, int64_t axis1) {
    const int64_t rank = x.rank();
    std::vector<int64_t> axes(static_cast<size_t>(rank));
    for (int64_t i = 0; i < rank; ++i) axes[static_cast<size_t>(i)] = i;
    std::swap(axes[static_cast<size_t>(normalize_axis(axis0, rank))], axes[static_cast<size_t>(normalize_axis(axis1, rank))]);
    return permute(x, axes);
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, int64_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts[0].shape();
    axis = normalize_axis(axis, static_cast<int64_t>(first.size()));
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::vector<int64_t> extents;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool compatible = s.size() == first.size();
        for (size_t d = 0; compatible && d < s.size(); ++d) {
            if (static_cast<int64_t>(d) != axis && s[d] != first[d]) compatible = false;
        }
        if (!compatible) throw ShapeError("concat: incompatible shapes " + shape_str(first) + " and " + shape_str(s));
        extents.push_back(s[axis]);
        out_shape[axis] += s[axis];
    }
    const AxisSplit s = split_axis(out_shape, axis);
    std::vector<T> out(static_cast<size_t>(shape_numel(out_shape)));
    int64_t offset = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
        const T* in = parts[p].data().data();
        const int64_t block = extents[p] * s.inner;
        for (int64_t o = 0; o < s.outer; ++o) {
            std::copy(in + o * block, in + (o + 1) * block, out.begin() + (o * s.extent * s.inner + offset));
        }
        offset += block;
    }
    std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
    return make_result<T>("concat", out_shape, std::move(out), inputs, [s, extents](Node<T>& self) {
        const T* g = self.grad.data();
        int64_t offset = 0;
        for (size_t p = 0; p < extents.size(); ++p) {
            const int64_t block = extents[p] * s.inner;
            if (Node<T>* t = grad_target(self, p)) {
                T* gx = t->grad_buffer().data();
                for (int64_t o = 0; o < s.outer; ++o)
                    for (int64_t k = 0; k < block; ++k) gx[o * block + k] += g[o * s.extent * s.inner + offset + k];
            }
            offset += block;
        }
    });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int64_t axis, int64_t begin, int64_t end) {
    axis = normalize_axis(axis, x.rank());
    const int64_t extent = x.shape()[axis];
    if (begin < 0 || end > extent || begin >= end) {
        throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for axis " +
                         std::to_string(axis) + " of " + shape_str(x.shape()));
    }
    const AxisSplit s = split_axis(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = end - begin;
    const int64_t block = (end - begin) * s.inner;
    std::vector<T> out(static_cast<size_t>(s.outer * block));
    const T* in = x.data().data();
    for (int64_t o = 0; o < s.outer; ++o) {
        const T* src = in + (o * s.extent + begin) * s.inner;
        std::copy(src, src + block, out.begin() + o * block);
    }
    return make_result<T>("slice", std::move(out_shape), std::move(out), {&x}, [s, begin, block](Node<T>& self) {
        Node<T>* t = grad_target(self, 0);
        if (t == nullptr) return;
        T* gx = t->grad_buffer().data();
        const T* g = self.grad.data();
        for (int64_t o = 0; o < s.outer; ++o)
            for (int64_t k = 0; k < block; ++k) gx[(o * s.extent + begin) * s.inner + k] += g[o * block + k];
    });
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
    }
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(static_cast<size_t>(m * n));
    MutMap<T>(out.data(), m, n).noalias() = ConstMap<T>(a.data().data(), m, k) * ConstMap<T>(b.data().data(), k, n);
    return make_result<T>("matmul", Shape{m, n}, std::move(out), {&a, &b}, [m, k, n](Node<T>& self) {
        ConstMap<T> g(self.grad.data(), m, n);
        if (Node<T>* ta = grad_target(self, 0)) {
            MutMap<T>(ta->grad_buffer().data(), m, k).noalias() += g * ConstMap<T>(self.inputs[1]->data.data(), k, n).transpose();
        }
        if (Node<T>* tb = grad_target(self, 1)) {
            MutMap<T>(tb->grad_buffer().data(), k, n).noalias() += ConstMap<T>(self.inputs[0]->data.data(), m, k).transpose() * g;
        }
    });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    const bool ranks_ok = a.rank() >= 3 && a.rank() == b.rank();
    bool lead_ok = ranks_ok;
    for (int64_t d = 0; lead_ok && d < a.rank() - 2; ++d) lead_ok = a.dim(d) == b.dim(d);
    if (!lead_ok || a.dim(-1) != b.dim(-2)) {
        throw ShapeError("bmm: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
    }
    const int64_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
    const int64_t batch = a.numel() / (m * k);
    Shape out_shape = a.shape();
    out_shape.back() = n;
    std::vector<T> out(static_cast<size_t>(batch * m * n));
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    parallel_for(batch, [&](int64_t begin, int64_t end) {
        for (int64_t i = begin; i < end; ++i) {
            MutMap<T>(out.data() + i * m * n, m, n).noalias() =
                ConstMap<T>(pa + i * m * k, m, k) * ConstMap<T>(pb + i * k * n, k, n);
        }
    });
    return make_result<T>("bmm", std::move(out_shape), std::move(out), {&a, &b}, [batch, m, k, n](Node<T>& self) {
        Node<T>* ta = grad_target(self, 0);
        Node<T>* tb = grad_target(self, 1);
        T* ga = ta ? ta->grad_buffer().data() : nullptr;
        T* gb = tb ? tb->grad_buffer().data() : nullptr;
        const T* pa = self.inputs[0]->data.data();
        const T* pb = self.inputs[1]->data.data();
        const T* g = self.grad.data();
        parallel_for(batch, [&](int64_t begin, int64_t end) {
            for (int64_t i = begin; i < end; ++i) {
                ConstMap<T> gi(g + i * m * n, m, n);
                if (ga) MutMap<T>(ga + i * m * k, m, k).noalias() += gi * ConstMap<T>(pb + i * k * n, k, n).transpose();
                if (gb) MutMap<T>(gb + i * k * n, k, n).noalias() += ConstMap<T>(pa + i * m * k, m, k).transpose() * gi;
            }
        });
    });
}

#define VTCC_INSTANTIATE_OPS(T)                                                              \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> neg(const Tensor<T>&);                                                \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                      \
    template Tensor<T> mul_scalar(const Tensor<T>&, T);                                      \
    template Tensor<T> exp(const Tensor<T>&);                                                \
    template Tensor<T> log(const Tensor<T>&);                                                \
    template Tensor<T> sqrt(const Tensor<T>&);                                               \
    template Tensor<T> square(const Tensor<T>&);                                             \
    template Tensor<T> sum(const Tensor<T>&);                                                \
    template Tensor<T> sum(const Tensor<T>&, int64_t, bool);                                 \
    template Tensor<T> mean(const Tensor<T>&);                                               \
    template Tensor<T> mean(const Tensor<T>&, int64_t, bool);                                \
    template Tensor<T> logsumexp(const Tensor<T>&, int64_t, bool);                           \
    template Tensor<T> l2_norm(const Tensor<T>&, int64_t, bool);                             \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                     \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<int64_t>&);               \
    template Tensor<T> transpose(const Tensor<T>&);                                          \
    template Tensor<T> transpose(const Tensor<T>&, int64_t, int64_t);                        \
    template Tensor<T> concat(std::span<const Tensor<T>>, int64_t);                          \
    template Tensor<T> slice(const Tensor<T>&, int64_t, int64_t, int64_t);                   \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&);

VTCC_INSTANTIATE_OPS(float)
VTCC_INSTANTIATE_OPS(double)

}  // namespace vtcc
