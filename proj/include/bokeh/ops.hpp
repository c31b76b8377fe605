#pragma once

#include <vector>

#include "bokeh/autodiff.hpp"

// Differentiable operators over rank-3 (channels x height x width) tensors.
// Every forward checks its output for NaN/Inf and throws NumericError.
namespace bokeh::ad {

// Cross-correlation. weight is [out, in, k, k], bias is [out].
// The output extent (H + 2*padding - k) / stride + 1 must divide exactly.
template <class T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

// Learned upsampling; weight is [in, out, k, k] and k must equal stride,
// so every input pixel scatters into its own stride x stride output tile.
template <class T>
Var<T> conv2d_transpose(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, int stride);

// 2x2 max pooling, stride 2. Ties route the gradient to the first element
// in row-major order.
template <class T>
Var<T> maxpool2(const Var<T>& input);

// x if x > 0 else alpha * x. The derivative at 0 is alpha.
template <class T>
Var<T> leaky_relu(const Var<T>& input, T alpha);

template <class T>
Var<T> tanh_act(const Var<T>& input);

// Per-channel spatial standardization followed by gamma * x + beta.
template <class T>
Var<T> instance_norm(const Var<T>& input, const Var<T>& gamma, const Var<T>& beta, T eps);

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

template <class T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  return concat_channels<T>(std::vector<Var<T>>{a, b});
}

template <class T>
Var<T> slice_channels(const Var<T>& input, std::size_t begin, std::size_t count);

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b);

// scale * x + shift, elementwise.
template <class T>
Var<T> affine(const Var<T>& input, T scale, T shift);

// Scalar (one-element) results.
template <class T>
Var<T> sum(const Var<T>& input);

template <class T>
Var<T> mean(const Var<T>& input);

// mean |a - b|; the subgradient at a == b is 0.
template <class T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);

// mean (a - b)^2
template <class T>
Var<T> mean_sq_diff(const Var<T>& a, const Var<T>& b);

}  // namespace bokeh::ad
