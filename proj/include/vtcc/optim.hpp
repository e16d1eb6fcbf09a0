#pragma once

#include <span>
#include <vector>

#include "vtcc/tensor.hpp"

namespace vtcc {

// Adam with bias correction and no weight decay.
template <typename T>
struct AdamState {
    T lr = T(3e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    int64_t step_count = 0;
    std::vector<std::vector<T>> m;  // empty until the first step
    std::vector<std::vector<T>> v;

    void validate() const;
};

// One update of every parameter in `params`. Each parameter must carry a
// gradient; moment buffers are created zeroed on the first call.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state);

}  // namespace vtcc
