#include "vtcc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vtcc/tensor.hpp"

namespace vtcc {

namespace {

double entropy(const std::vector<int64_t>& sizes, int64_t n) {
    double h = 0.0;
    for (int64_t s : sizes) {
        if (s > 0) {
            const double p = static_cast<double>(s) / n;
            h -= p * std::log(p);
        }
    }
    return h;
}

double pairs(int64_t m) { return 0.5 * static_cast<double>(m) * static_cast<double>(m - 1); }

bool is_bijective(const ContingencyTable& t) {
    for (int i = 0; i < t.rows; ++i) {
        if (std::count_if(t.counts.begin() + i * t.cols, t.counts.begin() + (i + 1) * t.cols,
                          [](int64_t c) { return c > 0; }) > 1) {
            return false;
        }
    }
    for (int j = 0; j < t.cols; ++j) {
        int nonzero = 0;
        for (int i = 0; i < t.rows; ++i) nonzero += t.at(i, j) > 0;
        if (nonzero > 1) return false;
    }
    return true;
}

}  // namespace

std::vector<int64_t> ContingencyTable::row_sums() const {
    std::vector<int64_t> s(static_cast<size_t>(rows), 0);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) s[i] += at(i, j);
    return s;
}

std::vector<int64_t> ContingencyTable::col_sums() const {
    std::vector<int64_t> s(static_cast<size_t>(cols), 0);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) s[j] += at(i, j);
    return s;
}

ContingencyTable contingency_table(std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size()) {
        throw ContractError("contingency_table: " + std::to_string(pred.size()) + " predictions vs " +
                            std::to_string(truth.size()) + " labels");
    }
    if (pred.empty()) throw ContractError("contingency_table: no samples");
    ContingencyTable t;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || truth[i] < 0) throw ContractError("contingency_table: negative label");
        t.rows = std::max(t.rows, pred[i] + 1);
        t.cols = std::max(t.cols, truth[i] + 1);
    }
    t.counts.assign(static_cast<size_t>(t.rows) * t.cols, 0);
    for (size_t i = 0; i < pred.size(); ++i) ++t.counts[static_cast<size_t>(pred[i]) * t.cols + truth[i]];
    t.n = static_cast<int64_t>(pred.size());
    return t;
}

double nmi(const ContingencyTable& t) {
    const auto a = t.row_sums(), b = t.col_sums();
    const double hu = entropy(a, t.n), hv = entropy(b, t.n);
    if (hu == 0.0 && hv == 0.0) return 1.0;
    if (hu == 0.0 || hv == 0.0) return 0.0;
    if (is_bijective(t)) return 1.0;
    double mi = 0.0;
    for (int i = 0; i < t.rows; ++i) {
        for (int j = 0; j < t.cols; ++j) {
            const int64_t c = t.at(i, j);
            if (c == 0) continue;
            mi += static_cast<double>(c) / t.n *
                  std::log(static_cast<double>(c) * t.n / (static_cast<double>(a[i]) * static_cast<double>(b[j])));
        }
    }
    return std::clamp(mi / std::sqrt(hu * hv), 0.0, 1.0);
}

double nmi(std::span<const int> pred, std::span<const int> truth) { return nmi(contingency_table(pred, truth)); }

std::vector<int> hungarian_assignment(std::span<const double> cost, int k) {
    if (k < 1 || cost.size() != static_cast<size_t>(k) * k) {
        throw ContractError("hungarian_assignment: expected a " + std::to_string(k) + "x" + std::to_string(k) +
                            " cost matrix");
    }
    for (double c : cost) {
        if (!std::isfinite(c)) throw ContractError("hungarian_assignment: non-finite cost");
    }
    // Potentials u (rows), v (columns); p[j] is the row matched to column j, 1-based with 0 as the sentinel.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0);
    std::vector<int> p(k + 1, 0), way(k + 1, 0);
    for (int i = 1; i <= k; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(k + 1, inf);
        std::vector<char> used(k + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= k; ++j) {
                if (used[j]) continue;
                const double cur = cost[static_cast<size_t>(i0 - 1) * k + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= k; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(static_cast<size_t>(k), -1);
    for (int j = 1; j <= k; ++j) assignment[p[j] - 1] = j - 1;
    return assignment;
}

double clustering_accuracy(const ContingencyTable& t) {
    const int k = std::max(t.rows, t.cols);
    std::vector<double> cost(static_cast<size_t>(k) * k, 0.0);
    for (int i = 0; i < t.rows; ++i)
        for (int j = 0; j < t.cols; ++j) cost[static_cast<size_t>(i) * k + j] = -static_cast<double>(t.at(i, j));
    const auto match = hungarian_assignment(cost, k);
    int64_t correct = 0;
    for (int i = 0; i < t.rows; ++i) {
        if (match[i] < t.cols) correct += t.at(i, match[i]);
    }
    return static_cast<double>(correct) / t.n;
}

double clustering_accuracy(std::span<const int> pred, std::span<const int> truth) {
    return clustering_accuracy(contingency_table(pred, truth));
}

double ari(const ContingencyTable& t) {
    if (t.n < 2) throw ContractError("ari needs at least 2 samples");
    if (is_bijective(t)) return 1.0;
    double index = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (int64_t c : t.counts) index += pairs(c);
    for (int64_t s : t.row_sums()) sum_a += pairs(s);
    for (int64_t s : t.col_sums()) sum_b += pairs(s);
    const double expected = sum_a * sum_b / pairs(t.n);
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected == 0.0) return 0.0;
    return (index - expected) / (max_index - expected);
}

double ari(std::span<const int> pred, std::span<const int> truth) { return ari(contingency_table(pred, truth)); }

MetricsReport evaluate_clustering(std::span<const int> pred, std::span<const int> truth, int clusters) {
    const ContingencyTable t = contingency_table(pred, truth);
    MetricsReport r;
    r.nmi = nmi(t);
    r.acc = clustering_accuracy(t);
    r.ari = ari(t);
    r.cluster_sizes = t.row_sums();
    r.cluster_sizes.resize(static_cast<size_t>(std::max(clusters, t.rows)), 0);
    r.n = t.n;
    return r;
}

}  // namespace vtcc
