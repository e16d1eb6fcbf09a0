#pragma once

// Internal helpers shared by the op implementations.

#include <initializer_list>
#include <memory>
#include <utility>
#include <vector>

#include "vtcc/tensor.hpp"

namespace vtcc::detail {

// Wraps a forward result in a new node. The backward closure and input edges
// are only kept when grad mode is on and some input requires a gradient.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::initializer_list<const Tensor<T>*> inputs,
                      typename Node<T>::BackwardFn backward) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->seq = next_node_seq();
    node->op = op;
    bool needs_grad = false;
    if (GradMode::enabled()) {
        for (const Tensor<T>* in : inputs) {
            if (in != nullptr && in->defined() && in->requires_grad()) needs_grad = true;
        }
    }
    if (needs_grad) {
        node->requires_grad = true;
        for (const Tensor<T>* in : inputs) {
            node->inputs.push_back(in != nullptr && in->defined() ? in->node_ptr() : nullptr);
        }
        node->backward = std::move(backward);
    }
    return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      const std::vector<Tensor<T>>& inputs, typename Node<T>::BackwardFn backward) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->seq = next_node_seq();
    node->op = op;
    bool needs_grad = false;
    if (GradMode::enabled()) {
        for (const auto& in : inputs) {
            if (in.defined() && in.requires_grad()) needs_grad = true;
        }
    }
    if (needs_grad) {
        node->requires_grad = true;
        for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
        node->backward = std::move(backward);
    }
    return Tensor<T>(std::move(node));
}

// Input i of `self` if it exists and wants a gradient, else nullptr.
template <typename T>
Node<T>* grad_target(Node<T>& self, size_t i) {
    if (i >= self.inputs.size()) return nullptr;
    Node<T>* in = self.inputs[i].get();
    return (in != nullptr && in->requires_grad) ? in : nullptr;
}

}  // namespace vtcc::detail
