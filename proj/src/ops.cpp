#include "vgamba/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "vgamba/flops.hpp"

namespace vgamba {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

// Strides padded to `rank`, 0 on broadcast axes.
std::vector<int64_t> bcast_strides(const Shape& s, size_t rank) {
  const auto st = row_major_strides(s);
  std::vector<int64_t> out(rank, 0);
  const size_t off = rank - s.size();
  for (size_t i = 0; i < s.size(); ++i) out[off + i] = (s[i] == 1) ? 0 : st[i];
  return out;
}

template <typename T, typename F>
Tensor<T> bcast_apply(const Tensor<T>& a, const Tensor<T>& b, F f) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (int64_t i = 0; i < a.numel(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  const Shape os = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out(os);
  const size_t rank = os.size();
  const auto ost = row_major_strides(os);
  const auto ast = bcast_strides(a.shape(), rank);
  const auto bst = bcast_strides(b.shape(), rank);
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t flat = 0; flat < out.numel(); ++flat) {
    int64_t rem = flat, ao = 0, bo = 0;
    for (size_t d = 0; d < rank; ++d) {
      const int64_t id = rem / ost[d];
      rem -= id * ost[d];
      ao += id * ast[d];
      bo += id * bst[d];
    }
    po[flat] = f(pa[ao], pb[bo]);
  }
  return out;
}

template <typename T>
Tensor<T> expand_to(const Tensor<T>& t, const Shape& target) {
  if (t.shape() == target) return t;
  Tensor<T> out(target);
  const size_t rank = target.size();
  if (t.shape().size() > rank) throw ShapeError("expand_to: rank shrink");
  const auto ost = row_major_strides(target);
  const auto tst = bcast_strides(t.shape(), rank);
  const T* pt = t.data();
  T* po = out.data();
  for (int64_t flat = 0; flat < out.numel(); ++flat) {
    int64_t rem = flat, to = 0;
    for (size_t d = 0; d < rank; ++d) {
      const int64_t id = rem / ost[d];
      rem -= id * ost[d];
      to += id * tst[d];
    }
    po[flat] = pt[to];
  }
  return out;
}

template <typename T, typename FV, typename FG>
Var<T> unary_op(const Var<T>& a, FV fv, FG fg) {
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  T* po = out.data();
  for (int64_t i = 0; i < out.numel(); ++i) po[i] = fv(pa[i]);
  return Var<T>::op(std::move(out), {a}, [fg](detail::Node<T>& n) {
    auto& av = n.parents[0];
    if (!av.requires_grad()) return;
    Tensor<T> g(av.shape());
    const T* px = av.value().data();
    const T* py = n.value.data();
    const T* pg = n.grad.data();
    T* pd = g.data();
    for (int64_t i = 0; i < g.numel(); ++i) pd[i] = pg[i] * fg(px[i], py[i]);
    av.accumulate(g);
  });
}

}  // namespace

// ---- elementwise binary ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = bcast_apply<T>(a.value(), b.value(), [](T x, T y) { return x + y; });
  return Var<T>::op(std::move(out), {a, b}, [](detail::Node<T>& n) {
    for (int i = 0; i < 2; ++i) {
      auto& p = n.parents[i];
      if (p.requires_grad()) p.accumulate(reduce_to(n.grad, p.shape()));
    }
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = bcast_apply<T>(a.value(), b.value(), [](T x, T y) { return x - y; });
  return Var<T>::op(std::move(out), {a, b}, [](detail::Node<T>& n) {
    if (n.parents[0].requires_grad()) n.parents[0].accumulate(reduce_to(n.grad, n.parents[0].shape()));
    if (n.parents[1].requires_grad()) {
      Tensor<T> g = n.grad;
      g.scale_(T(-1));
      n.parents[1].accumulate(reduce_to(g, n.parents[1].shape()));
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = bcast_apply<T>(a.value(), b.value(), [](T x, T y) { return x * y; });
  return Var<T>::op(std::move(out), {a, b}, [](detail::Node<T>& n) {
    auto& a = n.parents[0];
    auto& b = n.parents[1];
    if (a.requires_grad())
      a.accumulate(reduce_to(bcast_apply<T>(n.grad, b.value(), [](T g, T y) { return g * y; }), a.shape()));
    if (b.requires_grad())
      b.accumulate(reduce_to(bcast_apply<T>(n.grad, a.value(), [](T g, T x) { return g * x; }), b.shape()));
  });
}

template <typename T>
Var<T> divide(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = bcast_apply<T>(a.value(), b.value(), [](T x, T y) { return x / y; });
  return Var<T>::op(std::move(out), {a, b}, [](detail::Node<T>& n) {
    auto& a = n.parents[0];
    auto& b = n.parents[1];
    if (a.requires_grad())
      a.accumulate(reduce_to(bcast_apply<T>(n.grad, b.value(), [](T g, T y) { return g / y; }), a.shape()));
    if (b.requires_grad()) {
      Tensor<T> gy = bcast_apply<T>(n.grad, n.value, [](T g, T q) { return -g * q; });
      b.accumulate(reduce_to(bcast_apply<T>(gy, b.value(), [](T t, T y) { return t / y; }), b.shape()));
    }
  });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
  return unary_op(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return unary_op(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T s) {
  return unary_op(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

// ---- elementwise unary ----

template <typename T>
Var<T> vexp(const Var<T>& a) {
  return unary_op(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> vsqrt(const Var<T>& a) {
  return unary_op(a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return unary_op(a, [](T x) { return x > T(0) ? x : T(0); },
                  [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

namespace {
template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}
}  // namespace

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary_op(a, [](T x) { return sigmoid_scalar(x); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> silu(const Var<T>& a) {
  return unary_op(a, [](T x) { return x * sigmoid_scalar(x); },
                  [](T x, T) {
                    const T s = sigmoid_scalar(x);
                    return s * (T(1) + x * (T(1) - s));
                  });
}

template <typename T>
Var<T> softplus(const Var<T>& a) {
  return unary_op(a,
                  [](T x) {
                    // max(x,0) + log1p(exp(-|x|)): overflow-free for large |x|.
                    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
                  },
                  [](T x, T) { return sigmoid_scalar(x); });
}

// ---- shape ops ----

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(shape);
  Shape orig = a.shape();
  return Var<T>::op(std::move(out), {a}, [orig](detail::Node<T>& n) {
    n.parents[0].accumulate(n.grad.reshaped(orig));
  });
}

namespace {
template <typename T>
Tensor<T> permute_kernel(const Tensor<T>& t, const std::vector<int64_t>& axes) {
  const size_t r = t.shape().size();
  if (axes.size() != r) throw ShapeError("permute rank mismatch");
  Shape os(r);
  for (size_t i = 0; i < r; ++i) os[i] = t.shape()[static_cast<size_t>(axes[i])];
  Tensor<T> out(os);
  const auto ist = row_major_strides(t.shape());
  const auto ost = row_major_strides(os);
  std::vector<int64_t> map(r);
  for (size_t i = 0; i < r; ++i) map[i] = ist[static_cast<size_t>(axes[i])];
  const T* pi = t.data();
  T* po = out.data();
  for (int64_t flat = 0; flat < out.numel(); ++flat) {
    int64_t rem = flat, io = 0;
    for (size_t d = 0; d < r; ++d) {
      const int64_t id = rem / ost[d];
      rem -= id * ost[d];
      io += id * map[d];
    }
    po[flat] = pi[io];
  }
  return out;
}
}  // namespace

template <typename T>
Var<T> permute(const Var<T>& a, std::vector<int64_t> axes) {
  Tensor<T> out = permute_kernel(a.value(), axes);
  std::vector<int64_t> inv(axes.size());
  for (size_t i = 0; i < axes.size(); ++i) inv[static_cast<size_t>(axes[i])] = static_cast<int64_t>(i);
  return Var<T>::op(std::move(out), {a}, [inv](detail::Node<T>& n) {
    n.parents[0].accumulate(permute_kernel(n.grad, inv));
  });
}

namespace {
template <typename T>
Tensor<T> reverse_kernel(const Tensor<T>& t, int64_t axis) {
  Tensor<T> out(t.shape());
  const auto st = row_major_strides(t.shape());
  const int64_t len = t.shape()[static_cast<size_t>(axis)];
  const int64_t stride = st[static_cast<size_t>(axis)];
  const int64_t block = stride;                       // elements inside one index step
  const int64_t outer = t.numel() / (len * block);    // slices before the axis
  const T* pi = t.data();
  T* po = out.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < len; ++i) {
      const T* src = pi + (o * len + i) * block;
      T* dst = po + (o * len + (len - 1 - i)) * block;
      std::copy(src, src + block, dst);
    }
  return out;
}
}  // namespace

template <typename T>
Var<T> reverse_axis(const Var<T>& a, int64_t axis) {
  if (axis < 0) axis += a.value().dim();
  if (axis < 0 || axis >= a.value().dim()) throw ShapeError("reverse_axis out of range");
  Tensor<T> out = reverse_kernel(a.value(), axis);
  return Var<T>::op(std::move(out), {a}, [axis](detail::Node<T>& n) {
    n.parents[0].accumulate(reverse_kernel(n.grad, axis));
  });
}

template <typename T>
Var<T> slice(const Var<T>& a, int64_t axis, int64_t start, int64_t len) {
  const Shape& s = a.shape();
  if (axis < 0) axis += static_cast<int64_t>(s.size());
  if (axis < 0 || axis >= static_cast<int64_t>(s.size())) throw ShapeError("slice axis out of range");
  const int64_t extent = s[static_cast<size_t>(axis)];
  if (start < 0 || len < 0 || start + len > extent) throw ShapeError("slice range out of bounds");
  Shape os = s;
  os[static_cast<size_t>(axis)] = len;
  Tensor<T> out(os);
  const auto st = row_major_strides(s);
  const int64_t block = st[static_cast<size_t>(axis)];
  const int64_t outer = a.numel() / (extent * block);
  const T* pi = a.value().data();
  T* po = out.data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy(pi + (o * extent + start) * block, pi + (o * extent + start + len) * block,
              po + o * len * block);
  return Var<T>::op(std::move(out), {a}, [axis, start, len, extent, block](detail::Node<T>& n) {
    auto& p = n.parents[0];
    if (!p.requires_grad()) return;
    Tensor<T> g(p.shape());
    const int64_t outer = g.numel() / (extent * block);
    const T* pg = n.grad.data();
    T* pd = g.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(pg + o * len * block, pg + (o + 1) * len * block, pd + (o * extent + start) * block);
    p.accumulate(g);
  });
}

// ---- reductions ----

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  T acc = T(0);
  const T* p = a.value().data();
  for (int64_t i = 0; i < a.numel(); ++i) acc += p[i];
  return Var<T>::op(Tensor<T>(Shape{1}, std::vector<T>{acc}), {a}, [](detail::Node<T>& n) {
    auto& p = n.parents[0];
    if (!p.requires_grad()) return;
    Tensor<T> g(p.shape(), n.grad[0]);
    p.accumulate(g);
  });
}

namespace {
Shape reduced_shape(const Shape& s, const std::vector<int64_t>& axes, bool keepdim) {
  std::vector<bool> drop(s.size(), false);
  for (int64_t a : axes) {
    int64_t ax = a < 0 ? a + static_cast<int64_t>(s.size()) : a;
    if (ax < 0 || ax >= static_cast<int64_t>(s.size())) throw ShapeError("reduce axis out of range");
    drop[static_cast<size_t>(ax)] = true;
  }
  Shape out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (drop[i]) {
      if (keepdim) out.push_back(1);
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}
}  // namespace

template <typename T>
Var<T> reduce_sum(const Var<T>& a, std::vector<int64_t> axes, bool keepdim) {
  const Shape kept = reduced_shape(a.shape(), axes, true);
  Tensor<T> out = reduce_to(a.value(), kept);
  const Shape final_shape = reduced_shape(a.shape(), axes, keepdim);
  out = out.reshaped(final_shape);
  Shape in_shape = a.shape();
  return Var<T>::op(std::move(out), {a}, [kept, in_shape](detail::Node<T>& n) {
    auto& p = n.parents[0];
    if (!p.requires_grad()) return;
    p.accumulate(expand_to(n.grad.reshaped(kept), in_shape));
  });
}

template <typename T>
Var<T> reduce_mean(const Var<T>& a, std::vector<int64_t> axes, bool keepdim) {
  Var<T> s = reduce_sum(a, axes, keepdim);
  const int64_t count = a.numel() / std::max<int64_t>(1, s.numel());
  return mul_scalar(s, T(1) / static_cast<T>(count));
}

// ---- matmul / linear / softmax ----

namespace {

// General batched GEMM with broadcast leading dims; optional transposes read
// the untransposed storage through Eigen views.
template <typename T>
Tensor<T> matmul_kernel(const Tensor<T>& a, const Tensor<T>& b, bool ta, bool tb) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) throw ShapeError("matmul needs rank >= 2");
  const int64_t ar = as[as.size() - 2], ac = as[as.size() - 1];
  const int64_t br = bs[bs.size() - 2], bc = bs[bs.size() - 1];
  const int64_t M = ta ? ac : ar, K = ta ? ar : ac;
  const int64_t Kb = tb ? bc : br, N = tb ? br : bc;
  if (K != Kb)
    throw ShapeError("matmul inner extent mismatch: " + shape_str(as) + (ta ? "^T" : "") + " x " +
                     shape_str(bs) + (tb ? "^T" : ""));

  Shape alead(as.begin(), as.end() - 2), blead(bs.begin(), bs.end() - 2);
  Shape lead = broadcast_shape(alead, blead);
  Shape os = lead;
  os.push_back(M);
  os.push_back(N);
  Tensor<T> out(os);

  const int64_t batches = shape_numel(lead);
  const auto lst = row_major_strides(lead);
  const auto ast = bcast_strides(alead, lead.size());
  const auto bst = bcast_strides(blead, lead.size());
  const int64_t amat = ar * ac, bmat = br * bc, omat = M * N;
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t batch = 0; batch < batches; ++batch) {
    int64_t rem = batch, ao = 0, bo = 0;
    for (size_t d = 0; d < lead.size(); ++d) {
      const int64_t id = rem / lst[d];
      rem -= id * lst[d];
      ao += id * ast[d];
      bo += id * bst[d];
    }
    ECMap<T> ma(pa + ao * amat, ar, ac);
    ECMap<T> mb(pb + bo * bmat, br, bc);
    EMap<T> mo(po + batch * omat, M, N);
    if (!ta && !tb)
      mo.noalias() = ma * mb;
    else if (ta && !tb)
      mo.noalias() = ma.transpose() * mb;
    else if (!ta && tb)
      mo.noalias() = ma * mb.transpose();
    else
      mo.noalias() = ma.transpose() * mb.transpose();
  }
  return out;
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = matmul_kernel(a.value(), b.value(), false, false);
  FlopRecorder::add(out.numel() * a.shape().back());
  return Var<T>::op(std::move(out), {a, b}, [](detail::Node<T>& n) {
    auto& a = n.parents[0];
    auto& b = n.parents[1];
    if (a.requires_grad())
      a.accumulate(reduce_to(matmul_kernel(n.grad, b.value(), false, true), a.shape()));
    if (b.requires_grad())
      b.accumulate(reduce_to(matmul_kernel(a.value(), n.grad, true, false), b.shape()));
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& b) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw ShapeError("linear input needs rank >= 1");
  const int64_t K = xs.back();
  if (w.shape().size() != 2 || w.shape()[0] != K)
    throw ShapeError("linear weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(xs));
  const int64_t rows = x.numel() / K;
  Var<T> flat = reshape(x, {rows, K});
  Var<T> y = matmul(flat, w);
  Shape os = xs;
  os.back() = w.shape()[1];
  y = reshape(y, os);
  if (b) y = add(y, *b);
  return y;
}

template <typename T>
Var<T> softmax_lastdim(const Var<T>& a) {
  const Shape& s = a.shape();
  if (s.empty()) throw ShapeError("softmax needs rank >= 1");
  const int64_t L = s.back();
  const int64_t rows = a.numel() / L;
  Tensor<T> out(s);
  const T* pi = a.value().data();
  T* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = pi + r * L;
    T* y = po + r * L;
    T mx = x[0];
    for (int64_t i = 1; i < L; ++i) mx = std::max(mx, x[i]);
    T sum = T(0);
    for (int64_t i = 0; i < L; ++i) {
      y[i] = std::exp(x[i] - mx);
      sum += y[i];
    }
    for (int64_t i = 0; i < L; ++i) y[i] /= sum;
  }
  return Var<T>::op(std::move(out), {a}, [L, rows](detail::Node<T>& n) {
    auto& p = n.parents[0];
    if (!p.requires_grad()) return;
    Tensor<T> g(p.shape());
    const T* py = n.value.data();
    const T* pg = n.grad.data();
    T* pd = g.data();
    for (int64_t r = 0; r < rows; ++r) {
      const T* y = py + r * L;
      const T* go = pg + r * L;
      T* gi = pd + r * L;
      T dot = T(0);
      for (int64_t i = 0; i < L; ++i) dot += go[i] * y[i];
      for (int64_t i = 0; i < L; ++i) gi[i] = y[i] * (go[i] - dot);
    }
    p.accumulate(g);
  });
}

#define VGAMBA_INSTANTIATE_OPS(T)                                                              \
  template Var<T> add(const Var<T>&, const Var<T>&);                                           \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                           \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                           \
  template Var<T> divide(const Var<T>&, const Var<T>&);                                        \
  template Var<T> neg(const Var<T>&);                                                          \
  template Var<T> add_scalar(const Var<T>&, T);                                                \
  template Var<T> mul_scalar(const Var<T>&, T);                                                \
  template Var<T> vexp(const Var<T>&);                                                         \
  template Var<T> vsqrt(const Var<T>&);                                                        \
  template Var<T> relu(const Var<T>&);                                                         \
  template Var<T> sigmoid(const Var<T>&);                                                      \
  template Var<T> silu(const Var<T>&);                                                         \
  template Var<T> softplus(const Var<T>&);                                                     \
  template Var<T> reshape(const Var<T>&, Shape);                                               \
  template Var<T> permute(const Var<T>&, std::vector<int64_t>);                                \
  template Var<T> reverse_axis(const Var<T>&, int64_t);                                        \
  template Var<T> slice(const Var<T>&, int64_t, int64_t, int64_t);                             \
  template Var<T> sum_all(const Var<T>&);                                                      \
  template Var<T> reduce_sum(const Var<T>&, std::vector<int64_t>, bool);                       \
  template Var<T> reduce_mean(const Var<T>&, std::vector<int64_t>, bool);                      \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                        \
  template Var<T> linear(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);          \
  template Var<T> softmax_lastdim(const Var<T>&);

VGAMBA_INSTANTIATE_OPS(float)
VGAMBA_INSTANTIATE_OPS(double)
#undef VGAMBA_INSTANTIATE_OPS

}  // namespace vgamba
