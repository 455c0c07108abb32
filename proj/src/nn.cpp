#include "vgamba/nn.hpp"

#include <cmath>

#include "vgamba/errors.hpp"
#include "vgamba/flops.hpp"

namespace vgamba {

int norm_groups_for(int channels) {
  for (int g = std::min(32, channels); g >= 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

template <typename T>
Conv2d<T>::Conv2d(const InitCtx& ctx, int in_ch, int out_ch, int kernel, int stride, int pad,
                  bool with_bias)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad) {
  this->set_path(ctx.path);
  if (in_ch < 1 || out_ch < 1 || kernel < 1 || stride < 1 || pad < 0)
    throw ConfigError("bad convolution geometry");
  const double fan_out = static_cast<double>(out_ch) * kernel * kernel;
  Rng rng = ctx.rng("weight");
  w_ = Var<T>::leaf(
      rng.normal_tensor<T>({out_ch, in_ch, kernel, kernel}, 0.0, std::sqrt(2.0 / fan_out)), true);
  this->register_parameter("weight", w_);
  if (with_bias) {
    b_ = Var<T>::leaf(Tensor<T>::zeros({out_ch}), true);
    this->register_parameter("bias", *b_);
  }
}

template <typename T>
Var<T> Conv2d<T>::forward(const Var<T>& x) {
  FlopScope scope(this->path());
  Var<T> y = conv2d(x, w_, b_, stride_, pad_);
  NanProbe::report(this->path(), y.value());
  return y;
}

template <typename T>
Linear<T>::Linear(const InitCtx& ctx, int in_features, int out_features, bool with_bias) {
  this->set_path(ctx.path);
  if (in_features < 1 || out_features < 1) throw ConfigError("bad linear geometry");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  Rng rng = ctx.rng("weight");
  w_ = Var<T>::leaf(rng.uniform_tensor<T>({in_features, out_features}, -bound, bound), true);
  this->register_parameter("weight", w_);
  if (with_bias) {
    Rng brng = ctx.rng("bias");
    b_ = Var<T>::leaf(brng.uniform_tensor<T>({out_features}, -bound, bound), true);
    this->register_parameter("bias", *b_);
  }
}

template <typename T>
Var<T> Linear<T>::forward(const Var<T>& x) {
  FlopScope scope(this->path());
  Var<T> y = linear(x, w_, b_);
  NanProbe::report(this->path(), y.value());
  return y;
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(const InitCtx& ctx, int channels, T momentum, T eps)
    : momentum_(momentum), eps_(eps) {
  this->set_path(ctx.path);
  gamma_ = Var<T>::leaf(Tensor<T>::ones({channels}), true);
  beta_ = Var<T>::leaf(Tensor<T>::zeros({channels}), true);
  this->register_parameter("gamma", gamma_);
  this->register_parameter("beta", beta_);
  running_mean_ = Tensor<T>::zeros({channels});
  running_var_ = Tensor<T>::ones({channels});
  this->register_buffer("running_mean", &running_mean_);
  this->register_buffer("running_var", &running_var_);
}

template <typename T>
Var<T> BatchNorm2d<T>::forward(const Var<T>& x) {
  Var<T> y = batchnorm2d(x, gamma_, beta_, running_mean_, running_var_, this->training(),
                         momentum_, eps_);
  NanProbe::report(this->path(), y.value());
  return y;
}

template <typename T>
GroupNorm<T>::GroupNorm(const InitCtx& ctx, int channels, int groups, T eps)
    : groups_(groups), eps_(eps) {
  this->set_path(ctx.path);
  if (groups < 1 || channels % groups != 0) throw ConfigError("channels must divide into groups");
  gamma_ = Var<T>::leaf(Tensor<T>::ones({channels}), true);
  beta_ = Var<T>::leaf(Tensor<T>::zeros({channels}), true);
  this->register_parameter("gamma", gamma_);
  this->register_parameter("beta", beta_);
}

template <typename T>
Var<T> GroupNorm<T>::forward(const Var<T>& x) {
  Var<T> y = groupnorm(x, gamma_, beta_, groups_, eps_);
  NanProbe::report(this->path(), y.value());
  return y;
}

template <typename T>
Mhsa<T>::Mhsa(const InitCtx& ctx, int channels, int heads) : channels_(channels), heads_(heads) {
  this->set_path(ctx.path);
  if (heads < 1 || channels % heads != 0) throw ConfigError("channels must divide into heads");
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  auto make = [&](const char* name) {
    Rng rng = ctx.rng(name);
    Var<T> w = Var<T>::leaf(rng.uniform_tensor<T>({channels, channels}, -bound, bound), true);
    this->register_parameter(name, w);
    return w;
  };
  wq_ = make("wq");
  wk_ = make("wk");
  wv_ = make("wv");
  wo_ = make("wo");
}

template <typename T>
Var<T> Mhsa<T>::forward(const Var<T>& x) {
  FlopScope scope(this->path());
  const Shape& s = x.shape();
  if (s.size() != 3 || s[2] != channels_)
    throw ShapeError("attention expects [B, M, C] input, got " + shape_str(s));
  const int64_t B = s[0], M = s[1];
  const int64_t dh = channels_ / heads_;

  auto heads_view = [&](const Var<T>& t) {
    return permute(reshape(t, {B, M, heads_, dh}), {0, 2, 1, 3});  // [B, h, M, dh]
  };
  Var<T> q = heads_view(matmul(x, wq_));
  Var<T> k = heads_view(matmul(x, wk_));
  Var<T> v = heads_view(matmul(x, wv_));

  Var<T> scores = mul_scalar(matmul(q, permute(k, {0, 1, 3, 2})),
                             static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
  Var<T> attn = softmax_lastdim(scores);              // [B, h, M, M]
  Var<T> mixed = matmul(attn, v);                     // [B, h, M, dh]
  Var<T> merged = reshape(permute(mixed, {0, 2, 1, 3}), {B, M, channels_});
  Var<T> y = matmul(merged, wo_);
  NanProbe::report(this->path(), y.value());
  return y;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class Linear<float>;
template class Linear<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class GroupNorm<float>;
template class GroupNorm<double>;
template class Mhsa<float>;
template class Mhsa<double>;

}  // namespace vgamba
