#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vgamba/errors.hpp"

namespace vgamba {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

// Broadcast two shapes with trailing-dimension alignment. Mismatched non-1
// extents throw ShapeError.
Shape broadcast_shape(const Shape& a, const Shape& b);

// Dense row-major tensor. Plain value type: copy is deep, move is cheap.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {}
  Tensor(Shape shape, std::vector<T> data);
  Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  int64_t dim() const { return static_cast<int64_t>(shape_.size()); }
  int64_t size(int64_t d) const;
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool defined() const { return !shape_.empty() || !data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T& at(std::initializer_list<int64_t> idx);
  const T& at(std::initializer_list<int64_t> idx) const;

  Tensor reshaped(Shape new_shape) const;

  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // Elementwise += with equal shapes (gradient accumulation path).
  void add_(const Tensor& o);
  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void scale_(T v);

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Sum `g` down to `target` shape, inverting broadcast (trailing alignment).
template <typename T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target);

// Row-major strides for a shape.
std::vector<int64_t> row_major_strides(const Shape& s);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template Tensor<float> reduce_to(const Tensor<float>&, const Shape&);
extern template Tensor<double> reduce_to(const Tensor<double>&, const Shape&);

}  // namespace vgamba
