#include "vgamba/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vgamba {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    const int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[r - 1 - i] = std::max(da, db);
  }
  return out;
}

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int64_t i = static_cast<int64_t>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * s[i + 1];
  return st;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
    throw ShapeError("data size " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
}

template <typename T>
int64_t Tensor<T>::size(int64_t d) const {
  if (d < 0) d += dim();
  if (d < 0 || d >= dim()) throw ShapeError("axis " + std::to_string(d) + " out of range for " + shape_str(shape_));
  return shape_[static_cast<size_t>(d)];
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<int64_t> idx) {
  return const_cast<T&>(static_cast<const Tensor<T>*>(this)->at(idx));
}

template <typename T>
const T& Tensor<T>::at(std::initializer_list<int64_t> idx) const {
  if (static_cast<int64_t>(idx.size()) != dim())
    throw ShapeError("index rank mismatch for " + shape_str(shape_));
  int64_t off = 0, i = 0;
  const auto st = row_major_strides(shape_);
  for (int64_t v : idx) {
    if (v < 0 || v >= shape_[static_cast<size_t>(i)])
      throw ShapeError("index out of range for " + shape_str(shape_));
    off += v * st[static_cast<size_t>(i)];
    ++i;
  }
  return data_[static_cast<size_t>(off)];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape new_shape) const {
  if (shape_numel(new_shape) != numel())
    throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                     " changes element count");
  Tensor out;
  out.shape_ = std::move(new_shape);
  out.data_ = data_;
  return out;
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (const T& v : data_)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T>
void Tensor<T>::add_(const Tensor<T>& o) {
  if (!same_shape(o)) throw ShapeError("add_ shape mismatch " + shape_str(shape_) + " vs " + shape_str(o.shape_));
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
}

template <typename T>
void Tensor<T>::scale_(T v) {
  for (T& x : data_) x *= v;
}

template <typename T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  const Shape& gs = g.shape();
  const size_t gr = gs.size(), tr = target.size();
  if (tr > gr) throw ShapeError("reduce_to target rank exceeds source rank");
  // Align target to the trailing axes of g; axis i of g reduces if the aligned
  // target extent is 1 (or absent) while g's extent is larger.
  Shape tal(gr, 1);
  for (size_t i = 0; i < tr; ++i) tal[gr - tr + i] = target[i];
  for (size_t i = 0; i < gr; ++i)
    if (tal[i] != gs[i] && tal[i] != 1)
      throw ShapeError("reduce_to: " + shape_str(gs) + " does not broadcast from " + shape_str(target));

  Tensor<T> out(tal);
  const auto gst = row_major_strides(gs);
  const auto ost = row_major_strides(tal);
  std::vector<int64_t> idx(gr, 0);
  const T* gp = g.data();
  T* op = out.data();
  for (int64_t flat = 0; flat < g.numel(); ++flat) {
    int64_t rem = flat, ooff = 0;
    for (size_t d = 0; d < gr; ++d) {
      const int64_t id = rem / gst[d];
      rem -= id * gst[d];
      ooff += (tal[d] == 1 ? 0 : id) * ost[d];
    }
    op[ooff] += gp[flat];
  }
  return out.reshaped(target);
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> reduce_to(const Tensor<float>&, const Shape&);
template Tensor<double> reduce_to(const Tensor<double>&, const Shape&);

}  // namespace vgamba
