#include "bokeh/adam.hpp"

#include <cmath>

namespace bokeh {

template <class T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, double lr) {
  require_same_shape(param.shape(), grad.shape(), "adam_step");
  require_same_shape(param.shape(), state.m.shape(), "adam_step (first moment)");
  require_same_shape(param.shape(), state.v.shape(), "adam_step (second moment)");
  if (!(lr >= 0.0)) throw ConfigError("adam_step: learning rate must be >= 0");

  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  T* p = param.raw();
  T* m = state.m.raw();
  T* v = state.v.raw();
  const T* g = grad.raw();
  for (std::size_t i = 0, n = param.numel(); i < n; ++i) {
    const double gi = g[i];
    const double mi = b1 * m[i] + (1.0 - b1) * gi;
    const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + state.epsilon);
    p[i] = static_cast<T>(p[i] - update);
  }
}

template void adam_step<float>(Tensor<float>&, const Tensor<float>&, AdamState<float>&, double);
template void adam_step<double>(Tensor<double>&, const Tensor<double>&, AdamState<double>&, double);

}  // namespace bokeh
