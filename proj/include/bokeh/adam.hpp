#pragma once

#include <cstdint>

#include "bokeh/tensor.hpp"

namespace bokeh {

template <class T>
struct AdamState {
  Tensor<T> m;
  Tensor<T> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_shape(const Shape& shape) {
    AdamState s;
    s.m = Tensor<T>(shape);
    s.v = Tensor<T>(shape);
    return s;
  }
};

// One bias-corrected ADAM update of `param` in place:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
template <class T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, double lr);

}  // namespace bokeh
