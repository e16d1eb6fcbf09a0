#pragma once

// Differentiable tensor operations.
//
// Binary elementwise ops accept operands of identical shape, or one operand
// that broadcasts into the other in one of three restricted ways:
//   - scalar:   numel() == 1
//   - suffix:   its shape equals the trailing dims of the other (bias add)
//   - row:      same rank, last dim 1, every other dim equal (keepdim reductions)

#include <span>
#include <vector>

#include "vtcc/tensor.hpp"

namespace vtcc {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> neg(const Tensor<T>& x);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& x, T value);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
// Natural log of max(x, kLogClamp); the gradient is zero where the clamp is active.
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> sqrt(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);

inline constexpr double kLogClamp = 1e-12;

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> sum(const Tensor<T>& x, int64_t axis, bool keepdim);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x, int64_t axis, bool keepdim);
// log(sum(exp(x))) along `axis`, stabilized by the row maximum. -inf entries are allowed.
template <typename T> Tensor<T> logsumexp(const Tensor<T>& x, int64_t axis, bool keepdim);
// Euclidean norm along `axis`.
template <typename T> Tensor<T> l2_norm(const Tensor<T>& x, int64_t axis, bool keepdim);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int64_t>& axes);
// Swaps the two trailing axes.
template <typename T> Tensor<T> transpose(const Tensor<T>& x);
template <typename T> Tensor<T> transpose(const Tensor<T>& x, int64_t axis0, int64_t axis1);
template <typename T> Tensor<T> concat(std::span<const Tensor<T>> parts, int64_t axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int64_t axis, int64_t begin, int64_t end);

// [m×k]·[k×n]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// [...×m×k]·[...×k×n] with identical leading dims.
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> inline Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> inline Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> inline Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> inline Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

}  // namespace vtcc
