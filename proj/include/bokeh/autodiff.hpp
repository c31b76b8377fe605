#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "bokeh/tensor.hpp"

namespace bokeh::ad {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs that require grad.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }
  bool has_grad() const { return !grad.empty(); }

  // Adds `g` (same shape as value) into grad, allocating on first use.
  void accumulate(const Tensor<T>& g);
  // Returns the grad buffer, allocating zeros on first use.
  Tensor<T>& grad_buffer();
};

// Handle to a node of the recorded computation. Cheap to copy; copies alias.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  // Mutable access is for optimizers and loaders; never mutate a value
  // that a live graph still depends on.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  bool has_grad() const { return node_->has_grad(); }
  // Grad of a leaf after backward(); zeros when nothing flowed into it.
  Tensor<T> grad() const {
    return node_->has_grad() ? node_->grad : Tensor<T>::zeros_like(node_->value);
  }
  void zero_grad() { node_->grad = Tensor<T>(); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var<T>(std::move(n));
}

template <class T>
Var<T> constant(Tensor<T> value) {
  return leaf(std::move(value), false);
}

// Records an op result. `backward` is only kept when some input requires grad.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& in : inputs) {
    n->requires_grad = n->requires_grad || in.requires_grad();
  }
  if (n->requires_grad) {
    n->inputs.reserve(inputs.size());
    for (auto& in : inputs) n->inputs.push_back(in.ptr());
    n->backward = std::move(backward);
  }
  return Var<T>(std::move(n));
}

// Reverse-mode sweep from a scalar. Interior grads are recomputed on every
// call; leaf grads accumulate until zero_grad(). `seed` scales d(loss).
template <class T>
void backward(const Var<T>& loss, T seed = T{1});

}  // namespace bokeh::ad
