#ifndef CCL_CORE_AUTOGRAD_HPP
#define CCL_CORE_AUTOGRAD_HPP

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ccl/core/tensor.hpp"

namespace ccl {

// Tape-free reverse mode: every op result keeps shared ownership of its
// inputs and a closure that scatters its gradient into them. backward()
// orders the reachable graph topologically and runs the closures once.

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node<T>>> inputs;
  std::function<void(Node<T>&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  /// Direct write access; only optimizers and initializers should use it.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }

  /// Scalar value of a 1-element variable.
  T item() const {
    require(node_->value.size() == 1, "item() requires a single-element variable, got " + shape().str());
    return node_->value[0];
  }

  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Wraps `value` as an op result. The backward closure is recorded only
/// when grad mode is on and at least one input requires a gradient.
template <class T>
Var<T> record(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->is_leaf = false;
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& in : inputs) node->inputs.push_back(in.node());
      node->backward = std::move(backward);
    }
  }
  return Var<T>(std::move(node));
}

/// Accumulates gradients of `root` into every reachable leaf that requires
/// them. `seed` defaults to ones (the usual case is a scalar loss).
/// Interior nodes release their closures afterwards, so a graph can be
/// differentiated once.
template <class T>
void backward(const Var<T>& root, Tensor<T> seed = {}) {
  if (!root.requires_grad()) return;
  if (seed.empty()) seed = Tensor<T>(root.shape(), T(1));
  require(seed.shape() == root.shape(), "backward seed shape mismatch");

  // Owning references: interior nodes drop their inputs as the sweep
  // proceeds, which must not free nodes still waiting in `order`.
  std::vector<std::shared_ptr<Node<T>>> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<std::shared_ptr<Node<T>>, bool>> stack{{root.node(), false}};
  while (!stack.empty()) {
    auto [node, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      order.push_back(node);
      continue;
    }
    if (!visited.insert(node.get()).second) continue;
    stack.push_back({node, true});
    for (const auto& in : node->inputs)
      if (in->requires_grad && !visited.count(in.get())) stack.push_back({in, false});
  }

  root.node()->grad_buffer() += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = it->get();
    if (node->is_leaf) continue;
    if (node->backward && !node->grad.empty()) node->backward(*node);
    node->backward = nullptr;
    node->inputs.clear();
    node->grad = Tensor<T>();
  }
}

}  // namespace ccl

#endif  // CCL_CORE_AUTOGRAD_HPP
