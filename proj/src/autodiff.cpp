#include "bokeh/autodiff.hpp"

#include <unordered_map>

namespace bokeh::ad {

template <class T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (grad.empty()) {
    grad = g;
    return;
  }
  require_same_shape(grad.shape(), g.shape(), "accumulate");
  T* dst = grad.raw();
  const T* src = g.raw();
  for (std::size_t i = 0, n = grad.numel(); i < n; ++i) dst[i] += src[i];
}

template <class T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty()) grad = Tensor<T>::zeros_like(value);
  return grad;
}

namespace {

// Post-order over nodes that require grad; throws on a cycle.
template <class T>
std::vector<Node<T>*> topo_order(Node<T>* root) {
  enum class Mark { kActive, kDone };
  std::unordered_map<Node<T>*, Mark> marks;
  std::vector<Node<T>*> order;
  struct Frame {
    Node<T>* node;
    std::size_t next;
  };
  std::vector<Frame> stack{{root, 0}};
  marks[root] = Mark::kActive;
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->inputs.size()) {
      Node<T>* child = f.node->inputs[f.next++].get();
      if (!child->requires_grad) continue;
      auto it = marks.find(child);
      if (it == marks.end()) {
        marks[child] = Mark::kActive;
        stack.push_back({child, 0});
      } else if (it->second == Mark::kActive) {
        throw Error("backward: cycle detected in computation graph");
      }
    } else {
      marks[f.node] = Mark::kDone;
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

template <class T>
void backward(const Var<T>& loss, T seed) {
  if (!loss) throw Error("backward: empty variable");
  if (loss.value().numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  Node<T>* root = loss.node();
  if (!root->requires_grad) return;

  std::vector<Node<T>*> order = topo_order(root);
  for (Node<T>* n : order) {
    if (!n->is_leaf()) n->grad = Tensor<T>();
  }
  Tensor<T> g(root->value.shape(), seed);
  root->accumulate(g);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->is_leaf() || !n->has_grad() || !n->backward) continue;
    n->backward(*n);
  }
}

template struct Node<float>;
template struct Node<double>;
template void backward<float>(const Var<float>&, float);
template void backward<double>(const Var<double>&, double);

}  // namespace bokeh::ad
