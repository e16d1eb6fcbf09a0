#pragma once

// Central finite-difference checks of analytic gradients (float64).

#include <functional>
#include <string>
#include <vector>

#include "vtcc/tensor.hpp"

namespace vtcc {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-5;
    // Relative error is |numeric - analytic| / max(floor, |analytic|).
    double floor = 1e-8;
};

struct GradCheckResult {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    int64_t elements = 0;
    std::string worst;  // "input i, element j" of the largest error

    bool passed() const { return max_rel_error < tolerance; }
};

// `fn` must rebuild a scalar from the current contents of `inputs` on every
// call. Each input is perturbed in place and restored afterwards.
GradCheckResult check_gradients(std::string name, std::vector<TensorD> inputs, const std::function<TensorD()>& fn,
                                const GradCheckOptions& options = {});

// Reduces a tensor to a scalar through fixed random weights, so no output
// element is invisible to the check (plain sums hide e.g. softmax gradients).
class RandomProjection {
   public:
    explicit RandomProjection(uint64_t seed) : seed_(seed) {}
    TensorD operator()(const TensorD& y);

   private:
    uint64_t seed_;
    TensorD weights_;
};

// Leaf tensor with entries uniform in [lo, hi].
TensorD random_tensor(Shape shape, uint64_t seed, double lo = -2.0, double hi = 2.0, bool requires_grad = true);

}  // namespace vtcc
