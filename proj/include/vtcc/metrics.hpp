#pragma once

// External clustering metrics and the K-means baseline.

#include <cstdint>
#include <span>
#include <vector>

namespace vtcc {

struct ContingencyTable {
    int rows = 0;  // predicted clusters (largest label + 1)
    int cols = 0;  // true classes
    std::vector<int64_t> counts;
    int64_t n = 0;

    int64_t at(int i, int j) const { return counts[static_cast<size_t>(i) * cols + j]; }
    std::vector<int64_t> row_sums() const;
    std::vector<int64_t> col_sums() const;
};

// Labels must be non-negative and of equal length; ContractError otherwise.
ContingencyTable contingency_table(std::span<const int> pred, std::span<const int> truth);

// Mutual information over the geometric mean of the two entropies (natural logs).
double nmi(const ContingencyTable& table);
double nmi(std::span<const int> pred, std::span<const int> truth);

// Kuhn-Munkres on a square row-major cost matrix. Returns the column assigned
// to each row, minimizing total cost.
std::vector<int> hungarian_assignment(std::span<const double> cost, int k);

// Best one-to-one cluster-to-class mapping; the table is zero-padded to square.
double clustering_accuracy(const ContingencyTable& table);
double clustering_accuracy(std::span<const int> pred, std::span<const int> truth);

double ari(const ContingencyTable& table);
double ari(std::span<const int> pred, std::span<const int> truth);

struct MetricsReport {
    double nmi = 0.0;
    double acc = 0.0;
    double ari = 0.0;
    std::vector<int64_t> cluster_sizes;  // one entry per cluster
    int64_t n = 0;
};

// `clusters` sizes the histogram; it grows if a prediction exceeds it.
MetricsReport evaluate_clustering(std::span<const int> pred, std::span<const int> truth, int clusters);

struct KMeansOptions {
    int max_iter = 300;
    int restarts = 10;
};

struct KMeansResult {
    std::vector<int> labels;
    std::vector<double> centroids;  // K×d, row-major
    double inertia = 0.0;
    int iterations = 0;
    // Inertia after each assignment step of the kept restart.
    std::vector<double> inertia_history;
};

// k-means++ seeding, then Lloyd iterations until the assignment stops changing
// or max_iter. An empty cluster is re-seeded at the point farthest from its
// centroid. Keeps the restart with the lowest inertia.
KMeansResult kmeans(std::span<const double> points, int64_t n, int64_t d, int k, uint64_t seed,
                    const KMeansOptions& options = {});

// Sum of squared distances of each point to its cluster mean.
double partition_inertia(std::span<const double> points, int64_t n, int64_t d, std::span<const int> labels, int k);

}  // namespace vtcc
