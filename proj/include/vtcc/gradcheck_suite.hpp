#pragma once

// Finite-difference gradient checks over every differentiable op and the full
// micro model, as run by `vtcc gradcheck` and the acceptance suite.

#include <functional>
#include <string>
#include <vector>

#include "vtcc/gradcheck.hpp"
#include "vtcc/layers.hpp"

namespace vtcc {

// Fixture of the end-to-end check: model init, images (+1, +2) and parameter draw.
inline constexpr uint64_t kMicroModelSeed = 28;
inline constexpr uint64_t kMicroParamSeed = 303;

// Replaces every visited parameter with a fresh draw and returns the new
// leaves in visit order. Norm gains land in [0.5, 1.5] and offsets in
// [-0.25, 0.25], which keeps ReLU units after BatchNorm alive; everything else
// is uniform in [-scale, scale].
std::vector<TensorD> randomize_for_gradcheck(const std::function<void(ParamVisitor<double>&)>& visit, uint64_t seed,
                                             double scale = 0.75);

struct GradCheckSuiteReport {
    std::vector<GradCheckResult> results;
    double seconds = 0.0;

    bool passed() const;
};

// Op-level checks at `op_tolerance`, then L_total on the micro model
// (d=8, B=1, H=2, side=8, s=1, K=3, N=4) at `model_tolerance`.
GradCheckSuiteReport run_gradcheck_suite(uint64_t seed = 0, double op_tolerance = 1e-5,
                                         double model_tolerance = 1e-4);

}  // namespace vtcc
