#include "vtcc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace vtcc {

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

int64_t normalize_axis(int64_t axis, int64_t rank) {
    const int64_t resolved = axis < 0 ? axis + rank : axis;
    if (resolved < 0 || resolved >= rank) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    }
    return resolved;
}

uint64_t next_node_seq() {
    static std::atomic<uint64_t> counter{0};
    return ++counter;
}

template <typename T>
std::vector<T>& Node<T>::grad_buffer() {
    if (!requires_grad) throw ContractError(std::string("grad buffer requested for a tensor without requires_grad (op ") + op + ")");
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
}

template <typename T>
void Node<T>::accumulate_grad(std::span<const T> g) {
    if (g.size() != data.size()) throw ContractError(std::string("gradient size mismatch for op ") + op);
    if (grad.empty()) {
        if (!requires_grad) grad_buffer();  // throws
        grad.assign(g.begin(), g.end());
        return;
    }
    for (size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

template <typename T>
void Node<T>::accumulate_grad(std::vector<T>&& g) {
    if (grad.empty() && requires_grad && g.size() == data.size()) {
        grad = std::move(g);
        return;
    }
    accumulate_grad(std::span<const T>(g));
}

namespace {

template <typename T>
std::shared_ptr<Node<T>> make_leaf(Shape shape, std::vector<T> data, bool requires_grad) {
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw ShapeError("shape " + shape_str(shape) + " does not match data length " + std::to_string(data.size()));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    node->seq = next_node_seq();
    return node;
}

thread_local bool g_grad_enabled = true;

}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool enabled) { g_grad_enabled = enabled; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    return Tensor(make_leaf<T>(std::move(shape), std::vector<T>(static_cast<size_t>(std::max<int64_t>(n, 0)), T(0)), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    return Tensor(make_leaf<T>(std::move(shape), std::vector<T>(static_cast<size_t>(std::max<int64_t>(n, 0)), value), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(Shape shape, std::vector<T> values, bool requires_grad) {
    return Tensor(make_leaf<T>(std::move(shape), std::move(values), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(make_leaf<T>(Shape{1}, std::vector<T>{value}, requires_grad));
}

template <typename T>
int64_t Tensor<T>::dim(int64_t axis) const {
    return node_->shape[static_cast<size_t>(normalize_axis(axis, rank()))];
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
    if (!node_->is_leaf()) throw ContractError(std::string("mutable_data on non-leaf tensor (op ") + node_->op + ")");
    return node_->data;
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<int64_t> index) const {
    if (static_cast<int64_t>(index.size()) != rank()) throw ShapeError("index rank mismatch for " + shape_str(shape()));
    int64_t flat = 0;
    size_t axis = 0;
    for (int64_t i : index) {
        const int64_t d = node_->shape[axis++];
        if (i < 0 || i >= d) throw ShapeError("index out of range for " + shape_str(shape()));
        flat = flat * d + i;
    }
    return node_->data[static_cast<size_t>(flat)];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
    if (!node_->is_leaf()) throw ContractError("set_requires_grad on non-leaf tensor");
    node_->requires_grad = flag;
    if (!flag) node_->grad.clear();
    return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (!node_->requires_grad) return;
    node_->grad.assign(node_->data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(make_leaf<T>(node_->shape, node_->data, false));
}

template <typename T>
Tensor<T> Tensor<T>::clone_leaf(bool requires_grad) const {
    return Tensor(make_leaf<T>(node_->shape, node_->data, requires_grad));
}

template <typename T>
Tape<T> Tape<T>::record(const Tensor<T>& root) {
    Tape tape;
    tape.root_ = root.node();
    std::unordered_set<Node<T>*> seen;
    std::vector<Node<T>*> stack{root.node()};
    seen.insert(root.node());
    while (!stack.empty()) {
        Node<T>* node = stack.back();
        stack.pop_back();
        tape.nodes_.push_back(node);
        for (const auto& in : node->inputs) {
            if (in && in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
        }
    }
    std::sort(tape.nodes_.begin(), tape.nodes_.end(),
              [](const Node<T>* a, const Node<T>* b) { return a->seq < b->seq; });
    return tape;
}

template <typename T>
void Tape<T>::run_backward() {
    if (root_ == nullptr) return;
    root_->grad_buffer()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node<T>* node = *it;
        if (node->is_leaf()) continue;
        if (node->has_grad()) node->backward(*node);
        std::vector<T>().swap(node->grad);
    }
}

template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined()) throw ContractError("backward on undefined tensor");
    if (loss.numel() != 1) throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw ContractError("backward: loss is not connected to any tensor that requires grad");
    Tape<T>::record(loss).run_backward();
}

template struct Node<float>;
template struct Node<double>;
template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace vtcc
