#pragma once

// Dense row-major tensor with a dynamically recorded reverse-mode tape.
//
// A Tensor is a shared handle to a graph node. Operations in ops.hpp create
// new nodes that remember their inputs and a backward closure whenever
// gradient recording is enabled and at least one input requires a gradient.
// The tape is single-owner and single-threaded; kernels underneath may run
// in parallel.

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "odereg/errors.hpp"

namespace odereg {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape);

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads self.grad and accumulates into self.inputs[i]->grad.
  std::function<void(Node& self)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
  bool is_leaf() const { return !backward; }
};

bool& grad_mode_flag();

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables tape recording for its lifetime (evaluation, data generation).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) {
    detail::grad_mode_flag() = false;
  }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    node_->value.assign(static_cast<std::size_t>(shape_numel(shape)), T(0));
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_string(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.node_->value.begin(), t.node_->value.end(), value);
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::int64_t numel() const {
    return static_cast<std::int64_t>(node_->value.size());
  }

  std::span<const T> data() const { return node_->value; }
  // Writes through to the node; only meaningful for leaves or buffers that no
  // recorded operation still depends on.
  std::span<T> mutable_data() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  T item() const {
    if (numel() != 1) {
      throw ContractError("item() on tensor of shape " + shape_string(shape()));
    }
    return node_->value[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool is_leaf() const { return node_->is_leaf(); }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  // Gradient as a dense vector; zeros when nothing has been accumulated.
  std::vector<T> grad_or_zeros() const {
    return has_grad() ? node_->grad : std::vector<T>(node_->value.size(), T(0));
  }
  void zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  // Copy of the values with no tape history.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  const NodePtr& node() const { return node_; }

  // Builds an op result. The backward closure is attached only when recording
  // is enabled and some input requires a gradient.
  static Tensor from_op(Shape shape, std::vector<T> values,
                        std::vector<Tensor> inputs,
                        std::function<void(detail::Node<T>&)> backward) {
    Tensor out(std::move(shape), std::move(values), false);
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->inputs.reserve(inputs.size());
    for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
    out.node_->backward = std::move(backward);
    return out;
  }

 private:
  NodePtr node_;
};

// Reverse sweep from a scalar loss. Leaf gradients accumulate across calls;
// intermediate gradients are recomputed on every call.
template <class T>
void backward(const Tensor<T>& loss);

extern template void backward<float>(const Tensor<float>&);
extern template void backward<double>(const Tensor<double>&);

// Sum of per-element squares of the accumulated gradients; used for logging.
template <class T>
double grad_norm(std::span<const Tensor<T>> params);

}  // namespace odereg
