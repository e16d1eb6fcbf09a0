#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "vtcc/gradcheck.hpp"
#include "vtcc/ops.hpp"

namespace vtcc::testing {

inline void require_gradcheck(const std::string& name, std::vector<TensorD> inputs, const std::function<TensorD()>& fn,
                              double tolerance = 1e-5) {
    GradCheckOptions options;
    options.tolerance = tolerance;
    const GradCheckResult r = check_gradients(name, std::move(inputs), fn, options);
    INFO(name << ": max rel err " << r.max_rel_error << " at " << r.worst);
    CHECK(r.elements > 0);
    CHECK(r.passed());
}

template <typename T>
std::vector<T> to_vector(const Tensor<T>& t) {
    return std::vector<T>(t.data().begin(), t.data().end());
}

template <typename T>
double max_abs_diff(const std::vector<T>& a, const std::vector<T>& b) {
    REQUIRE(a.size() == b.size());
    double worst = 0;
    for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return worst;
}

}  // namespace vtcc::testing
