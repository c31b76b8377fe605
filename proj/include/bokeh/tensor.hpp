#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bokeh/error.hpp"

namespace bokeh {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

// Dense row-major array. Images use channels x height x width.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    validate_extents();
    data_.assign(shape_numel(shape_), fill);
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_extents();
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Image accessors; only meaningful for rank-3 tensors.
  std::size_t channels() const { return shape_.at(0); }
  std::size_t height() const { return shape_.at(1); }
  std::size_t width() const { return shape_.at(2); }

  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }
  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  // Pointer to the first element of channel c of a rank-3 tensor.
  T* plane(std::size_t c) { return data_.data() + c * shape_[1] * shape_[2]; }
  const T* plane(std::size_t c) const { return data_.data() + c * shape_[1] * shape_[2]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_extents() const {
    for (std::size_t e : shape_) {
      if (e < 1) throw ShapeError("tensor extents must be >= 1, got " + to_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

template <class T>
bool all_finite(std::span<const T> values);

// Throws NumericError naming `op` when any value is NaN or Inf.
template <class T>
void check_finite(const Tensor<T>& t, const char* op);

// Requires identical shapes; the message names `op` and both shapes.
void require_same_shape(const Shape& a, const Shape& b, const char* op);

}  // namespace bokeh
