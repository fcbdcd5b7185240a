#include "odereg/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace odereg {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace detail {
bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

template <class T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape())
                                        : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  using NodeT = detail::Node<T>;
  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeT* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->value.size(), T(0));
  }
  loss.node()->ensure_grad()[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (!node->is_leaf()) node->backward(*node);
  }
}

template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

template <class T>
double grad_norm(std::span<const Tensor<T>> params) {
  double total = 0.0;
  for (const auto& p : params) {
    for (T g : p.grad()) total += static_cast<double>(g) * g;
  }
  return std::sqrt(total);
}

template double grad_norm<float>(std::span<const Tensor<float>>);
template double grad_norm<double>(std::span<const Tensor<double>>);

}  // namespace odereg
