#include "vtcc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "vtcc/ops.hpp"
#include "vtcc/rng.hpp"

namespace vtcc {
namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

GradCheckResult check_gradients(std::string name, std::vector<TensorD> inputs, const std::function<TensorD()>& fn,
                                const GradCheckOptions& options) {
    GradCheckResult result;
    result.name = std::move(name);
    result.tolerance = options.tolerance;

    for (auto& in : inputs) in.zero_grad();
    backward(fn());
    std::vector<std::vector<double>> analytic;
    for (const auto& in : inputs) analytic.emplace_back(in.grad().begin(), in.grad().end());

    NoGradGuard no_grad;
    for (size_t i = 0; i < inputs.size(); ++i) {
        std::span<double> values = inputs[i].mutable_data();
        for (size_t j = 0; j < values.size(); ++j) {
            const double original = values[j];
            values[j] = original + options.step;
            const double plus = fn().item();
            values[j] = original - options.step;
            const double minus = fn().item();
            values[j] = original;
            const double numeric = (plus - minus) / (2.0 * options.step);
            const double a = analytic[i][j];
            const double rel = std::abs(numeric - a) / std::max(options.floor, std::abs(a));
            if (!(rel <= result.max_rel_error)) {
                result.max_rel_error = std::isnan(rel) ? INFINITY : rel;
                result.worst = "input " + std::to_string(i) + ", element " + std::to_string(j) +
                               " (analytic " + format_double(a) + ", numeric " + format_double(numeric) + ")";
            }
            ++result.elements;
        }
    }
    return result;
}

TensorD RandomProjection::operator()(const TensorD& y) {
    if (!weights_.defined() || weights_.shape() != y.shape()) {
        weights_ = random_tensor(y.shape(), seed_, -1.0, 1.0, false);
    }
    return sum(mul(y, weights_));
}

TensorD random_tensor(Shape shape, uint64_t seed, double lo, double hi, bool requires_grad) {
    SeededRng rng(seed);
    std::vector<double> values(static_cast<size_t>(shape_numel(shape)));
    for (double& v : values) v = rng.uniform(lo, hi);
    return TensorD::from_vector(std::move(shape), std::move(values), requires_grad);
}

}  // namespace vtcc
