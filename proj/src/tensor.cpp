#include "bokeh/tensor.hpp"

#include <cmath>
#include <sstream>

namespace bokeh {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <class T>
bool all_finite(std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <class T>
void check_finite(const Tensor<T>& t, const char* op) {
  if (!all_finite<T>(t.data())) {
    throw NumericError(std::string(op) + ": non-finite value in output");
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
  }
}

template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);
template void check_finite<float>(const Tensor<float>&, const char*);
template void check_finite<double>(const Tensor<double>&, const char*);

}  // namespace bokeh
