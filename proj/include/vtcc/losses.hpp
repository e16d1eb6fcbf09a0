#pragma once

// Instance- and cluster-level contrastive objectives.

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vtcc/tensor.hpp"

namespace vtcc {

struct LossConfig {
    double tau_instance = 0.5;
    double tau_cluster = 1.0;
    double entropy_weight = 1.0;  // 0 disables the assignment-entropy term

    void validate() const;
};

// Raised when a loss value is not finite. Carries both addends.
class DiagnosticsError : public std::runtime_error {
   public:
    DiagnosticsError(const std::string& what, double instance_loss, double cluster_loss)
        : std::runtime_error(what), instance_loss(instance_loss), cluster_loss(cluster_loss) {}
    double instance_loss;
    double cluster_loss;
};

// aᵀb/(‖a‖·‖b‖). Throws NumericError on a zero-norm input.
template <typename T>
T cosine_similarity(std::span<const T> a, std::span<const T> b);

// InfoNCE over paired rows of a and b ([M×D] each). Anchor r's positive is its
// counterpart row; its denominator spans the other 2M−1 rows, positive included.
// Returns the sum of all 2M anchor losses divided by 2M.
template <typename T>
Tensor<T> info_nce(const Tensor<T>& a, const Tensor<T>& b, double tau);

template <typename T>
Tensor<T> instance_contrastive_loss(const Tensor<T>& z_a, const Tensor<T>& z_b, const LossConfig& cfg);

template <typename T>
struct AssignmentEntropy {
    Tensor<T> mass;     // [K], column sums divided by N
    Tensor<T> entropy;  // scalar, −Σ p log p with 0·log 0 = 0
};

template <typename T>
AssignmentEntropy<T> assignment_entropy(const Tensor<T>& y);

template <typename T>
struct ClusterLossParts {
    Tensor<T> contrastive;
    Tensor<T> entropy_a;
    Tensor<T> entropy_b;
    Tensor<T> total;  // contrastive − w·(H_a + H_b)
};

template <typename T>
ClusterLossParts<T> cluster_loss_parts(const Tensor<T>& y_a, const Tensor<T>& y_b, const LossConfig& cfg);

template <typename T>
Tensor<T> cluster_contrastive_loss(const Tensor<T>& y_a, const Tensor<T>& y_b, const LossConfig& cfg);

// L_ins + L_clu. Throws DiagnosticsError if either addend is not finite.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& instance_loss, const Tensor<T>& cluster_loss);

// Row-wise argmax; ties go to the lowest index.
template <typename T>
std::vector<int> hard_assignments(const Tensor<T>& y);

}  // namespace vtcc
