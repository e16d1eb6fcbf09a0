#include <algorithm>
#include <limits>
#include <string>

#include "vtcc/metrics.hpp"
#include "vtcc/rng.hpp"
#include "vtcc/tensor.hpp"

namespace vtcc {

namespace {

double squared_distance(const double* a, const double* b, int64_t d) {
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) {
        const double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

struct Lloyd {
    std::span<const double> points;
    int64_t n, d;
    int k;

    const double* point(int64_t i) const { return points.data() + i * d; }

    std::vector<double> seed_plus_plus(SeededRng& rng) const {
        std::vector<double> centroids(static_cast<size_t>(k * d));
        std::vector<double> nearest(static_cast<size_t>(n), std::numeric_limits<double>::infinity());
        int64_t pick = rng.uniform_int(0, n - 1);
        for (int c = 0; c < k; ++c) {
            std::copy(point(pick), point(pick) + d, centroids.begin() + c * d);
            double total = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                nearest[i] = std::min(nearest[i], squared_distance(point(i), centroids.data() + c * d, d));
                total += nearest[i];
            }
            if (c + 1 == k) break;
            if (total <= 0.0) {
                pick = rng.uniform_int(0, n - 1);
                continue;
            }
            double target = rng.uniform() * total;
            pick = n - 1;
            for (int64_t i = 0; i < n; ++i) {
                target -= nearest[i];
                if (target < 0.0 && nearest[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        return centroids;
    }

    // Returns inertia; `changed` reports whether any label moved.
    double assign(const std::vector<double>& centroids, std::vector<int>& labels, std::vector<double>& dist,
                  bool& changed) const {
        double inertia = 0.0;
        changed = false;
        for (int64_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double dd = squared_distance(point(i), centroids.data() + c * d, d);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            changed |= labels[i] != best;
            labels[i] = best;
            dist[i] = best_d;
            inertia += best_d;
        }
        return inertia;
    }

    void update(std::vector<double>& centroids, const std::vector<int>& labels, std::vector<double>& dist) const {
        std::vector<int64_t> sizes(static_cast<size_t>(k), 0);
        std::fill(centroids.begin(), centroids.end(), 0.0);
        for (int64_t i = 0; i < n; ++i) {
            ++sizes[labels[i]];
            for (int64_t j = 0; j < d; ++j) centroids[labels[i] * d + j] += point(i)[j];
        }
        for (int c = 0; c < k; ++c) {
            if (sizes[c] > 0) {
                for (int64_t j = 0; j < d; ++j) centroids[c * d + j] /= static_cast<double>(sizes[c]);
                continue;
            }
            const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
            std::copy(point(far), point(far) + d, centroids.begin() + c * d);
            dist[far] = 0.0;
        }
    }
};

}  // namespace

double partition_inertia(std::span<const double> points, int64_t n, int64_t d, std::span<const int> labels, int k) {
    std::vector<double> sums(static_cast<size_t>(k * d), 0.0);
    std::vector<int64_t> sizes(static_cast<size_t>(k), 0);
    for (int64_t i = 0; i < n; ++i) {
        ++sizes[labels[i]];
        for (int64_t j = 0; j < d; ++j) sums[labels[i] * d + j] += points[i * d + j];
    }
    double inertia = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const int c = labels[i];
        for (int64_t j = 0; j < d; ++j) {
            const double diff = points[i * d + j] - sums[c * d + j] / static_cast<double>(sizes[c]);
            inertia += diff * diff;
        }
    }
    return inertia;
}

KMeansResult kmeans(std::span<const double> points, int64_t n, int64_t d, int k, uint64_t seed,
                    const KMeansOptions& options) {
    if (k < 1 || n < k) {
        throw ContractError("kmeans needs n >= K >= 1, got n=" + std::to_string(n) + " K=" + std::to_string(k));
    }
    if (d < 1 || points.size() != static_cast<size_t>(n * d)) throw ContractError("kmeans: points are not n x d");
    const Lloyd lloyd{points, n, d, k};
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < std::max(1, options.restarts); ++restart) {
        SeededRng rng(SeededRng::derive(seed, {static_cast<uint64_t>(restart)}));
        KMeansResult run;
        run.centroids = lloyd.seed_plus_plus(rng);
        run.labels.assign(static_cast<size_t>(n), -1);
        std::vector<double> dist(static_cast<size_t>(n));
        for (run.iterations = 0; run.iterations < options.max_iter; ++run.iterations) {
            bool changed = false;
            run.inertia = lloyd.assign(run.centroids, run.labels, dist, changed);
            run.inertia_history.push_back(run.inertia);
            if (!changed) break;
            lloyd.update(run.centroids, run.labels, dist);
        }
        if (run.inertia < best.inertia) best = std::move(run);
    }
    return best;
}

}  // namespace vtcc
