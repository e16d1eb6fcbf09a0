#include "vtcc/losses.hpp"

#include <cmath>
#include <limits>

#include "vtcc/ops.hpp"

namespace vtcc {

void LossConfig::validate() const {
    if (!(tau_instance > 0) || !(tau_cluster > 0)) throw ContractError("temperatures must be > 0");
    if (!(entropy_weight >= 0)) throw ContractError("entropy_weight must be >= 0");
}

template <typename T>
T cosine_similarity(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += double(a[i]) * b[i];
        na += double(a[i]) * a[i];
        nb += double(b[i]) * b[i];
    }
    if (na == 0 || nb == 0) throw NumericError("cosine_similarity: zero-norm input");
    return static_cast<T>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

template <typename T>
Tensor<T> info_nce(const Tensor<T>& a, const Tensor<T>& b, double tau) {
    if (a.rank() != 2 || a.shape() != b.shape()) {
        throw ShapeError("info_nce: views must share shape [M x D], got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const int64_t m = a.dim(0);
    if (m < 2) throw ContractError("info_nce needs at least 2 anchors per view (no negatives otherwise)");
    const std::vector<Tensor<T>> parts{a, b};
    const Tensor<T> r = concat<T>(parts, 0);  // [2M×D]
    const Tensor<T> norms = l2_norm(r, 1, true);
    for (T v : norms.data()) {
        if (!(v > 0)) throw NumericError("info_nce: zero-norm embedding row");
    }
    const Tensor<T> unit = div(r, norms);
    const Tensor<T> logits = mul_scalar(matmul(unit, transpose(unit)), static_cast<T>(1.0 / tau));

    const int64_t n2 = 2 * m;
    std::vector<T> self_mask(static_cast<size_t>(n2 * n2), T(0));
    std::vector<T> positive(static_cast<size_t>(n2 * n2), T(0));
    for (int64_t i = 0; i < n2; ++i) {
        self_mask[i * n2 + i] = -std::numeric_limits<T>::infinity();
        positive[i * n2 + (i + m) % n2] = T(1);
    }
    const Tensor<T> masked = add(logits, Tensor<T>::from_vector({n2, n2}, std::move(self_mask)));
    const Tensor<T> log_denominator = sum(logsumexp(masked, 1, false));
    const Tensor<T> positive_logits = sum(mul(logits, Tensor<T>::from_vector({n2, n2}, std::move(positive))));
    return mul_scalar(sub(log_denominator, positive_logits), static_cast<T>(1.0 / static_cast<double>(n2)));
}

template <typename T>
Tensor<T> instance_contrastive_loss(const Tensor<T>& z_a, const Tensor<T>& z_b, const LossConfig& cfg) {
    cfg.validate();
    return info_nce(z_a, z_b, cfg.tau_instance);
}

template <typename T>
AssignmentEntropy<T> assignment_entropy(const Tensor<T>& y) {
    if (y.rank() != 2) throw ShapeError("assignment_entropy expects [N x K], got " + shape_str(y.shape()));
    const Tensor<T> p = mean(y, 0, false);
    // log clamps at 1e-12, so p = 0 contributes exactly 0.
    return {p, neg(sum(mul(p, log(p))))};
}

template <typename T>
ClusterLossParts<T> cluster_loss_parts(const Tensor<T>& y_a, const Tensor<T>& y_b, const LossConfig& cfg) {
    cfg.validate();
    if (y_a.rank() != 2 || y_a.shape() != y_b.shape()) {
        throw ShapeError("cluster loss: views must share shape [N x K], got " + shape_str(y_a.shape()) + " and " +
                         shape_str(y_b.shape()));
    }
    if (y_a.dim(1) < 2) throw ContractError("cluster loss needs K >= 2");
    ClusterLossParts<T> out;
    out.contrastive = info_nce(transpose(y_a), transpose(y_b), cfg.tau_cluster);
    out.entropy_a = assignment_entropy(y_a).entropy;
    out.entropy_b = assignment_entropy(y_b).entropy;
    if (cfg.entropy_weight == 0) {
        out.total = out.contrastive;
    } else {
        out.total = sub(out.contrastive, mul_scalar(add(out.entropy_a, out.entropy_b), static_cast<T>(cfg.entropy_weight)));
    }
    return out;
}

template <typename T>
Tensor<T> cluster_contrastive_loss(const Tensor<T>& y_a, const Tensor<T>& y_b, const LossConfig& cfg) {
    return cluster_loss_parts(y_a, y_b, cfg).total;
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& instance_loss, const Tensor<T>& cluster_loss) {
    const double li = instance_loss.item();
    const double lc = cluster_loss.item();
    if (!std::isfinite(li) || !std::isfinite(lc)) {
        throw DiagnosticsError("non-finite loss: instance=" + std::to_string(li) + " cluster=" + std::to_string(lc),
                               li, lc);
    }
    return add(instance_loss, cluster_loss);
}

template <typename T>
std::vector<int> hard_assignments(const Tensor<T>& y) {
    if (y.rank() != 2) throw ShapeError("hard_assignments expects [N x K], got " + shape_str(y.shape()));
    const int64_t n = y.dim(0), k = y.dim(1);
    const auto data = y.data();
    std::vector<int> labels(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int64_t best = 0;
        for (int64_t j = 1; j < k; ++j) {
            if (data[i * k + j] > data[i * k + best]) best = j;
        }
        labels[i] = static_cast<int>(best);
    }
    return labels;
}

#define VTCC_INSTANTIATE_LOSSES(T)                                                                             \
    template T cosine_similarity<T>(std::span<const T>, std::span<const T>);                                  \
    template Tensor<T> info_nce<T>(const Tensor<T>&, const Tensor<T>&, double);                               \
    template Tensor<T> instance_contrastive_loss<T>(const Tensor<T>&, const Tensor<T>&, const LossConfig&);   \
    template AssignmentEntropy<T> assignment_entropy<T>(const Tensor<T>&);                                    \
    template ClusterLossParts<T> cluster_loss_parts<T>(const Tensor<T>&, const Tensor<T>&, const LossConfig&); \
    template Tensor<T> cluster_contrastive_loss<T>(const Tensor<T>&, const Tensor<T>&, const LossConfig&);    \
    template Tensor<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&);                                     \
    template std::vector<int> hard_assignments<T>(const Tensor<T>&);

VTCC_INSTANTIATE_LOSSES(float)
VTCC_INSTANTIATE_LOSSES(double)

}  // namespace vtcc
