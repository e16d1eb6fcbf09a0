#include "vtcc/optim.hpp"

#include <cmath>
#include <string>

namespace vtcc {

template <typename T>
void AdamState<T>::validate() const {
    if (!(lr > T(0))) throw ContractError("adam: lr must be > 0");
    if (!(beta1 > T(0) && beta1 < T(1))) throw ContractError("adam: beta1 must lie in (0, 1)");
    if (!(beta2 > T(0) && beta2 < T(1))) throw ContractError("adam: beta2 must lie in (0, 1)");
    if (!(eps > T(0))) throw ContractError("adam: eps must be > 0");
    if (m.size() != v.size()) throw ContractError("adam: moment buffer counts differ");
}

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
    state.validate();
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(static_cast<size_t>(p.numel()), T(0));
            state.v.emplace_back(static_cast<size_t>(p.numel()), T(0));
        }
    }
    if (state.m.size() != params.size()) {
        throw ContractError("adam: " + std::to_string(params.size()) + " parameters but " +
                            std::to_string(state.m.size()) + " moment buffers");
    }
    for (size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) throw ContractError("adam: parameter " + std::to_string(i) + " has no gradient");
        if (static_cast<int64_t>(state.m[i].size()) != params[i].numel() ||
            static_cast<int64_t>(state.v[i].size()) != params[i].numel()) {
            throw ContractError("adam: moment buffer " + std::to_string(i) + " does not match parameter shape " +
                                shape_str(params[i].shape()));
        }
    }

    state.step_count += 1;
    const T t = static_cast<T>(state.step_count);
    const T correction1 = T(1) - std::pow(state.beta1, t);
    const T correction2 = T(1) - std::pow(state.beta2, t);
    for (size_t i = 0; i < params.size(); ++i) {
        std::span<T> theta = params[i].mutable_data();
        std::span<const T> g = params[i].grad();
        std::vector<T>& m = state.m[i];
        std::vector<T>& v = state.v[i];
        for (size_t j = 0; j < theta.size(); ++j) {
            m[j] = state.beta1 * m[j] + (T(1) - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (T(1) - state.beta2) * g[j] * g[j];
            const T m_hat = m[j] / correction1;
            const T v_hat = v[j] / correction2;
            theta[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<Tensor<float>>, AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace vtcc
