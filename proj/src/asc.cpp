#include "vgamba/asc.hpp"

#include <algorithm>

#include "vgamba/errors.hpp"
#include "vgamba/flops.hpp"

namespace vgamba {

template <typename T>
std::pair<Var<T>, Var<T>> coordinate_pool(const Var<T>& x) {
  if (x.shape().size() != 4) throw ShapeError("expected [B,C,H,W], got " + shape_str(x.shape()));
  return {reduce_mean(x, {3}, true), reduce_mean(x, {2}, true)};
}

template <typename T>
Asc<T>::Asc(const InitCtx& ctx, int channels, int reduction)
    : channels_(channels),
      mid_(std::max(8, channels / std::max(1, reduction))),
      reduce_(ctx.child("reduce"), channels, mid_, 1, 1, 0, true),
      expand_h_(ctx.child("expand_h"), mid_, channels, 1, 1, 0, false),
      expand_w_(ctx.child("expand_w"), mid_, channels, 1, 1, 0, false) {
  this->set_path(ctx.path);
  b_h_ = Var<T>::leaf(Tensor<T>::zeros({channels}), true);
  b_w_ = Var<T>::leaf(Tensor<T>::zeros({channels}), true);
  // alpha = 0.5 at start: both axes weighed equally.
  alpha_raw_ = Var<T>::leaf(Tensor<T>::zeros({channels}), true);
  this->register_module("reduce", &reduce_);
  this->register_module("expand_h", &expand_h_);
  this->register_module("expand_w", &expand_w_);
  this->register_parameter("b_h", b_h_);
  this->register_parameter("b_w", b_w_);
  this->register_parameter("alpha_raw", alpha_raw_);
}

template <typename T>
Var<T> Asc<T>::forward(const Var<T>& x) {
  FlopScope scope(this->path());
  if (x.shape().size() != 4 || x.shape()[1] != channels_)
    throw ShapeError("gate expects [B," + std::to_string(channels_) + ",H,W], got " +
                     shape_str(x.shape()));
  auto [x_h, x_w] = coordinate_pool(x);
  Var<T> f_h = add(expand_h_.forward(silu(reduce_.forward(x_h))),
                   reshape(b_h_, {channels_, 1, 1}));  // [B,C,H,1]
  Var<T> f_w = add(expand_w_.forward(silu(reduce_.forward(x_w))),
                   reshape(b_w_, {channels_, 1, 1}));  // [B,C,1,W]
  Var<T> alpha = reshape(sigmoid(alpha_raw_), {channels_, 1, 1});
  Var<T> pre = add(mul(alpha, f_h), mul(add_scalar(neg(alpha), T(1)), f_w));
  Var<T> y = mul(x, sigmoid(pre));
  NanProbe::report(this->path(), y.value());
  return y;
}

template std::pair<Var<float>, Var<float>> coordinate_pool(const Var<float>&);
template std::pair<Var<double>, Var<double>> coordinate_pool(const Var<double>&);

template class Asc<float>;
template class Asc<double>;

}  // namespace vgamba
