#pragma once

// Dense row-major tensors with a reverse-mode differentiation tape.
//
// A Tensor is a cheap handle to a shared Node. Ops create new nodes and never
// touch their inputs' data; the only mutation paths are leaf initialization,
// gradient accumulation during backward(), and the optimizer.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vtcc {

using Shape = std::vector<int64_t>;

enum class Dtype { kFloat32, kFloat64 };

template <typename T>
constexpr Dtype dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>, "float or double only");
    return std::is_same_v<T, float> ? Dtype::kFloat32 : Dtype::kFloat64;
}

class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// Violated precondition of an operation (not a shape problem).
class ContractError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& shape);
int64_t shape_numel(const Shape& shape);
// Resolves a possibly negative axis against `rank`; throws ShapeError when out of range.
int64_t normalize_axis(int64_t axis, int64_t rank);

template <typename T>
struct Node {
    using BackwardFn = std::function<void(Node&)>;

    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    uint64_t seq = 0;  // global creation order
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    BackwardFn backward;

    bool is_leaf() const { return !backward; }
    bool has_grad() const { return !grad.empty(); }
    std::vector<T>& grad_buffer();
    // grad += g. An empty buffer takes g directly instead of zero-filling first.
    void accumulate_grad(std::span<const T> g);
    void accumulate_grad(std::vector<T>&& g);
};

uint64_t next_node_seq();

template <typename T>
class Tensor {
   public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor from_vector(Shape shape, std::vector<T> values, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    static constexpr Dtype dtype() { return dtype_of<T>(); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t rank() const { return static_cast<int64_t>(node_->shape.size()); }
    int64_t dim(int64_t axis) const;
    int64_t numel() const { return static_cast<int64_t>(node_->data.size()); }

    std::span<const T> data() const { return node_->data; }
    // Leaf tensors only: parameter initialization and optimizer updates.
    std::span<T> mutable_data();
    T item() const;
    T at(std::initializer_list<int64_t> index) const;

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool flag);
    bool has_grad() const { return node_->has_grad(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->grad; }
    // Allocates (or resets to) a zero gradient buffer.
    void zero_grad();

    Tensor detach() const;
    Tensor clone_leaf(bool requires_grad) const;

    Node<T>* node() const { return node_.get(); }
    const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

   private:
    std::shared_ptr<Node<T>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Thread-local switch: when disabled, ops do not record backward closures.
class GradMode {
   public:
    static bool enabled();
    static void set_enabled(bool enabled);
};

class NoGradGuard {
   public:
    NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(previous_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

// The recorded computation reachable from a root, in creation order.
template <typename T>
class Tape {
   public:
    static Tape record(const Tensor<T>& root);

    const std::vector<Node<T>*>& nodes() const { return nodes_; }
    // Runs every backward closure in exact reverse creation order. Non-leaf
    // gradients are released afterwards; leaf gradients accumulate.
    void run_backward();

   private:
    std::vector<Node<T>*> nodes_;
    Node<T>* root_ = nullptr;
};

template <typename T>
void backward(const Tensor<T>& loss);

}  // namespace vtcc
