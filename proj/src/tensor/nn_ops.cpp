#include "vtcc/nn_ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numbers>

#include "op_builder.hpp"

namespace vtcc {

using detail::grad_target;
using detail::make_result;

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMat<T>>;

struct ConvGeometry {
    int64_t n, c, h, w;  // input
    int64_t f, kh, kw;   // filters
    int64_t stride, padding;
    int64_t out_h, out_w;

    int64_t patch() const { return c * kh * kw; }
    int64_t positions() const { return n * out_h * out_w; }
};

// cols[(c*kh + ky)*kw + kx][(n*out_h + oy)*out_w + ox]
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
    const int64_t positions = g.positions();
    for (int64_t c = 0; c < g.c; ++c)
        for (int64_t ky = 0; ky < g.kh; ++ky)
            for (int64_t kx = 0; kx < g.kw; ++kx) {
                T* row = cols + ((c * g.kh + ky) * g.kw + kx) * positions;
                for (int64_t n = 0; n < g.n; ++n) {
                    const T* plane = x + (n * g.c + c) * g.h * g.w;
                    for (int64_t oy = 0; oy < g.out_h; ++oy) {
                        const int64_t iy = oy * g.stride - g.padding + ky;
                        T* dst = row + (n * g.out_h + oy) * g.out_w;
                        if (iy < 0 || iy >= g.h) {
                            std::fill(dst, dst + g.out_w, T(0));
                            continue;
                        }
                        for (int64_t ox = 0; ox < g.out_w; ++ox) {
                            const int64_t ix = ox * g.stride - g.padding + kx;
                            dst[ox] = (ix >= 0 && ix < g.w) ? plane[iy * g.w + ix] : T(0);
                        }
                    }
                }
            }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* dx) {
    const int64_t positions = g.positions();
    for (int64_t c = 0; c < g.c; ++c)
        for (int64_t ky = 0; ky < g.kh; ++ky)
            for (int64_t kx = 0; kx < g.kw; ++kx) {
                const T* row = cols + ((c * g.kh + ky) * g.kw + kx) * positions;
                for (int64_t n = 0; n < g.n; ++n) {
                    T* plane = dx + (n * g.c + c) * g.h * g.w;
                    for (int64_t oy = 0; oy < g.out_h; ++oy) {
                        const int64_t iy = oy * g.stride - g.padding + ky;
                        if (iy < 0 || iy >= g.h) continue;
                        const T* src = row + (n * g.out_h + oy) * g.out_w;
                        for (int64_t ox = 0; ox < g.out_w; ++ox) {
                            const int64_t ix = ox * g.stride - g.padding + kx;
                            if (ix >= 0 && ix < g.w) plane[iy * g.w + ix] += src[ox];
                        }
                    }
                }
            }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int padding) {
    if (x.rank() != 4 || weight.rank() != 4 || x.dim(1) != weight.dim(1)) {
        throw ShapeError("conv2d: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(weight.shape()));
    }
    if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
    ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), weight.dim(3), stride, padding, 0, 0};
    if (g.h + 2 * padding < g.kh || g.w + 2 * padding < g.kw) {
        throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) + " larger than padded input " + shape_str(x.shape()));
    }
    g.out_h = (g.h + 2 * padding - g.kh) / stride + 1;
    g.out_w = (g.w + 2 * padding - g.kw) / stride + 1;
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.f)) {
        throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(g.f) + " filters");
    }

    const int64_t spatial = g.out_h * g.out_w;
    const int64_t positions = g.positions();
    std::vector<T> cols(static_cast<size_t>(g.patch() * positions));
    im2col(g, x.data().data(), cols.data());
    RowMat<T> out2d = ConstMap<T>(weight.data().data(), g.f, g.patch()) * ConstMap<T>(cols.data(), g.patch(), positions);

    std::vector<T> out(static_cast<size_t>(g.n * g.f * spatial));
    const T* b = bias.defined() ? bias.data().data() : nullptr;
    for (int64_t n = 0; n < g.n; ++n)
        for (int64_t f = 0; f < g.f; ++f) {
            const T* src = out2d.data() + f * positions + n * spatial;
            T* dst = out.data() + (n * g.f + f) * spatial;
            const T offset = b ? b[f] : T(0);
            for (int64_t p = 0; p < spatial; ++p) dst[p] = src[p] + offset;
        }

    return make_result<T>("conv2d", Shape{g.n, g.f, g.out_h, g.out_w}, std::move(out), {&x, &weight, &bias},
                          [g, cols = std::move(cols)](Node<T>& self) {
                              const int64_t spatial = g.out_h * g.out_w;
                              const int64_t positions = g.positions();
                              RowMat<T> grad2d(g.f, positions);
                              for (int64_t n = 0; n < g.n; ++n)
                                  for (int64_t f = 0; f < g.f; ++f) {
                                      const T* src = self.grad.data() + (n * g.f + f) * spatial;
                                      std::copy(src, src + spatial, grad2d.data() + f * positions + n * spatial);
                                  }
                              Node<T>* tx = grad_target(self, 0);
                              Node<T>* tw = grad_target(self, 1);
                              Node<T>* tb = grad_target(self, 2);
                              if (tw) {
                                  MutMap<T>(tw->grad_buffer().data(), g.f, g.patch()).noalias() +=
                                      grad2d * ConstMap<T>(cols.data(), g.patch(), positions).transpose();
                              }
                              if (tb) {
                                  T* gb = tb->grad_buffer().data();
                                  for (int64_t f = 0; f < g.f; ++f) gb[f] += grad2d.row(f).sum();
                              }
                              if (tx) {
                                  RowMat<T> dcols =
                                      ConstMap<T>(self.inputs[1]->data.data(), g.f, g.patch()).transpose() * grad2d;
                                  col2im_add(g, dcols.data(), tx->grad_buffer().data());
                              }
                          });
}

template <typename T>
BatchNormStats<T> BatchNormStats<T>::fresh(int64_t channels) {
    BatchNormStats stats;
    stats.running_mean.assign(static_cast<size_t>(channels), T(0));
    stats.running_var.assign(static_cast<size_t>(channels), T(1));
    return stats;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormStats<T>& stats,
                     NormMode mode) {
    if (x.rank() != 2 && x.rank() != 4) throw ShapeError("batch_norm: expected [N×C] or [N×C×H×W], got " + shape_str(x.shape()));
    const int64_t batch = x.dim(0), channels = x.dim(1);
    const int64_t spatial = x.numel() / (batch * channels);
    const int64_t count = batch * spatial;
    if (gamma.numel() != channels || beta.numel() != channels ||
        static_cast<int64_t>(stats.running_mean.size()) != channels ||
        static_cast<int64_t>(stats.running_var.size()) != channels) {
        throw ShapeError("batch_norm: parameters do not match " + std::to_string(channels) + " channels");
    }
    if (mode == NormMode::kTrain && count < 2) {
        throw ContractError("batch_norm: degenerate batch, " + std::to_string(count) + " value(s) per channel in train mode");
    }

    const T* in = x.data().data();
    std::vector<T> mu(static_cast<size_t>(channels)), rstd(static_cast<size_t>(channels));
    for (int64_t c = 0; c < channels; ++c) {
        if (mode == NormMode::kTrain) {
            T acc = 0;
            for (int64_t n = 0; n < batch; ++n) {
                const T* p = in + (n * channels + c) * spatial;
                for (int64_t s = 0; s < spatial; ++s) acc += p[s];
            }
            const T m = acc / static_cast<T>(count);
            T sq = 0;
            for (int64_t n = 0; n < batch; ++n) {
                const T* p = in + (n * channels + c) * spatial;
                for (int64_t s = 0; s < spatial; ++s) sq += (p[s] - m) * (p[s] - m);
            }
            const T var = sq / static_cast<T>(count);
            mu[c] = m;
            rstd[c] = T(1) / std::sqrt(var + stats.eps);
            stats.running_mean[c] = (T(1) - stats.momentum) * stats.running_mean[c] + stats.momentum * m;
            stats.running_var[c] = (T(1) - stats.momentum) * stats.running_var[c] +
                                   stats.momentum * var * static_cast<T>(count) / static_cast<T>(count - 1);
        } else {
            mu[c] = stats.running_mean[c];
            rstd[c] = T(1) / std::sqrt(stats.running_var[c] + stats.eps);
        }
    }

    std::vector<T> out(static_cast<size_t>(x.numel()));
    const T* gm = gamma.data().data();
    const T* bt = beta.data().data();
    for (int64_t n = 0; n < batch; ++n)
        for (int64_t c = 0; c < channels; ++c) {
            const T* p = in + (n * channels + c) * spatial;
            T* o = out.data() + (n * channels + c) * spatial;
            for (int64_t s = 0; s < spatial; ++s) o[s] = gm[c] * (p[s] - mu[c]) * rstd[c] + bt[c];
        }

    const bool training = mode == NormMode::kTrain;
    return make_result<T>(
        "batch_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
        [batch, channels, spatial, count, training, mu = std::move(mu), rstd = std::move(rstd)](Node<T>& self) {
            const T* in = self.inputs[0]->data.data();
            const T* gm = self.inputs[1]->data.data();
            const T* g = self.grad.data();
            Node<T>* tx = grad_target(self, 0);
            Node<T>* tg = grad_target(self, 1);
            Node<T>* tb = grad_target(self, 2);
            T* gx = tx ? tx->grad_buffer().data() : nullptr;
            T* gg = tg ? tg->grad_buffer().data() : nullptr;
            T* gb = tb ? tb->grad_buffer().data() : nullptr;
            for (int64_t c = 0; c < channels; ++c) {
                T sum_g = 0, sum_gx = 0;
                for (int64_t n = 0; n < batch; ++n) {
                    const int64_t base = (n * channels + c) * spatial;
                    for (int64_t s = 0; s < spatial; ++s) {
                        const T xhat = (in[base + s] - mu[c]) * rstd[c];
                        sum_g += g[base + s];
                        sum_gx += g[base + s] * xhat;
                    }
                }
                if (gg) gg[c] += sum_gx;
                if (gb) gb[c] += sum_g;
                if (!gx) continue;
                const T scale = gm[c] * rstd[c];
                const T inv_count = T(1) / static_cast<T>(count);
                for (int64_t n = 0; n < batch; ++n) {
                    const int64_t base = (n * channels + c) * spatial;
                    for (int64_t s = 0; s < spatial; ++s) {
                        if (training) {
                            const T xhat = (in[base + s] - mu[c]) * rstd[c];
                            gx[base + s] += scale * (g[base + s] - inv_count * sum_g - xhat * inv_count * sum_gx);
                        } else {
                            gx[base + s] += scale * g[base + s];
                        }
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
    const int64_t d = x.dim(-1);
    if (d < 2) throw ShapeError("layer_norm: last dim must be >= 2, got " + shape_str(x.shape()));
    if (gamma.numel() != d || beta.numel() != d) {
        throw ShapeError("layer_norm: gamma/beta must have " + std::to_string(d) + " entries");
    }
    const int64_t rows = x.numel() / d;
    const T eps = static_cast<T>(kLayerNormEps);
    std::vector<T> out(static_cast<size_t>(x.numel()));
    std::vector<T> mu(static_cast<size_t>(rows)), rstd(static_cast<size_t>(rows));
    const T* in = x.data().data();
    const T* gm = gamma.data().data();
    const T* bt = beta.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const T* p = in + r * d;
        T acc = 0;
        for (int64_t i = 0; i < d; ++i) acc += p[i];
        const T m = acc / static_cast<T>(d);
        T sq = 0;
        for (int64_t i = 0; i < d; ++i) sq += (p[i] - m) * (p[i] - m);
        const T rs = T(1) / std::sqrt(sq / static_cast<T>(d) + eps);
        mu[r] = m;
        rstd[r] = rs;
        T* o = out.data() + r * d;
        for (int64_t i = 0; i < d; ++i) o[i] = (p[i] - m) * rs * gm[i] + bt[i];
    }
    return make_result<T>(
        "layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
        [rows, d, mu = std::move(mu), rstd = std::move(rstd)](Node<T>& self) {
            const T* in = self.inputs[0]->data.data();
            const T* gm = self.inputs[1]->data.data();
            const T* g = self.grad.data();
            Node<T>* tx = grad_target(self, 0);
            Node<T>* tg = grad_target(self, 1);
            Node<T>* tb = grad_target(self, 2);
            T* gx = tx ? tx->grad_buffer().data() : nullptr;
            T* gg = tg ? tg->grad_buffer().data() : nullptr;
            T* gb = tb ? tb->grad_buffer().data() : nullptr;
            const T inv_d = T(1) / static_cast<T>(d);
            for (int64_t r = 0; r < rows; ++r) {
                const T* p = in + r * d;
                const T* gr = g + r * d;
                T sum_dxhat = 0, sum_dxhat_xhat = 0;
                for (int64_t i = 0; i < d; ++i) {
                    const T xhat = (p[i] - mu[r]) * rstd[r];
                    if (gg) gg[i] += gr[i] * xhat;
                    if (gb) gb[i] += gr[i];
                    const T dxhat = gr[i] * gm[i];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
                if (!gx) continue;
                T* out = gx + r * d;
                for (int64_t i = 0; i < d; ++i) {
                    const T xhat = (p[i] - mu[r]) * rstd[r];
                    out[i] += rstd[r] * (gr[i] * gm[i] - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
                }
            }
        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.data().begin(), x.data().end());
    for (T& v : out) v = v > T(0) ? v : T(0);
    const int64_t n = x.numel();
    return make_result<T>("relu", x.shape(), std::move(out), {&x}, [n](Node<T>& self) {
        Node<T>* t = grad_target(self, 0);
        if (t == nullptr) return;
        const T* in = t->data.data();
        const T* g = self.grad.data();
        T* gx = t->grad_buffer().data();
        for (int64_t i = 0; i < n; ++i)
            if (in[i] > T(0)) gx[i] += g[i];
    });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    using Array = Eigen::Array<T, Eigen::Dynamic, 1>;
    constexpr T kAlpha = static_cast<T>(0.044715);
    const T k = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
    const int64_t n = x.numel();
    const Eigen::Map<const Array> v(x.data().data(), n);
    // tanh(k·(v + α·v³)), reused by the backward pass.
    Array th = (k * (v + kAlpha * v.cube())).tanh();
    std::vector<T> out(static_cast<size_t>(n));
    Eigen::Map<Array>(out.data(), n) = T(0.5) * v * (T(1) + th);
    return make_result<T>("gelu", x.shape(), std::move(out), {&x}, [n, k, th = std::move(th)](Node<T>& self) {
        Node<T>* t = grad_target(self, 0);
        if (t == nullptr) return;
        const Eigen::Map<const Array> v(t->data.data(), n);
        const Eigen::Map<const Array> g(self.grad.data(), n);
        Eigen::Map<Array> gx(t->grad_buffer().data(), n);
        gx += g * (T(0.5) * (T(1) + th) +
                   T(0.5) * v * (T(1) - th.square()) * k * (T(1) + T(3) * kAlpha * v.square()));
    });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
    return kind == Activation::kRelu ? relu(x) : gelu(x);
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int64_t axis) {
    axis = normalize_axis(axis, x.rank());
    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int64_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const int64_t extent = x.dim(axis);
    std::vector<T> out(static_cast<size_t>(x.numel()));
    const T* in = x.data().data();
    if (inner == 1) {
        using Array = Eigen::Array<T, Eigen::Dynamic, 1>;
        for (int64_t o = 0; o < outer; ++o) {
            const Eigen::Map<const Array> row(in + o * extent, extent);
            Eigen::Map<Array> dst(out.data() + o * extent, extent);
            dst = (row - row.maxCoeff()).exp();
            dst /= dst.sum();
        }
    } else {
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) {
                const int64_t base = o * extent * inner + i;
                T peak = in[base];
                for (int64_t e = 1; e < extent; ++e) peak = std::max(peak, in[base + e * inner]);
                T total = 0;
                for (int64_t e = 0; e < extent; ++e) {
                    const T v = std::exp(in[base + e * inner] - peak);
                    out[base + e * inner] = v;
                    total += v;
                }
                const T inv = T(1) / total;
                for (int64_t e = 0; e < extent; ++e) out[base + e * inner] *= inv;
            }
    }
    return make_result<T>("softmax", x.shape(), std::move(out), {&x}, [outer, extent, inner](Node<T>& self) {
        Node<T>* t = grad_target(self, 0);
        if (t == nullptr) return;
        const T* y = self.data.data();
        const T* g = self.grad.data();
        T* gx = t->grad_buffer().data();
        if (inner == 1) {
            using Array = Eigen::Array<T, Eigen::Dynamic, 1>;
            for (int64_t o = 0; o < outer; ++o) {
                const Eigen::Map<const Array> yr(y + o * extent, extent);
                const Eigen::Map<const Array> gr(g + o * extent, extent);
                const T dot = (yr * gr).sum();
                Eigen::Map<Array>(gx + o * extent, extent) += yr * (gr - dot);
            }
            return;
        }
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) {
                const int64_t base = o * extent * inner + i;
                T dot = 0;
                for (int64_t e = 0; e < extent; ++e) dot += g[base + e * inner] * y[base + e * inner];
                for (int64_t e = 0; e < extent; ++e) {
                    const int64_t idx = base + e * inner;
                    gx[idx] += y[idx] * (g[idx] - dot);
                }
            }
    });
}

#define VTCC_INSTANTIATE_NN(T)                                                                                   \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);                   \
    template struct BatchNormStats<T>;                                                                           \
    template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormStats<T>&,      \
                                  NormMode);                                                                     \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                         \
    template Tensor<T> relu(const Tensor<T>&);                                                                   \
    template Tensor<T> gelu(const Tensor<T>&);                                                                   \
    template Tensor<T> activation(const Tensor<T>&, Activation);                                                 \
    template Tensor<T> softmax(const Tensor<T>&, int64_t);

VTCC_INSTANTIATE_NN(float)
VTCC_INSTANTIATE_NN(double)

}  // namespace vtcc
