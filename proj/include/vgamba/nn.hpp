#pragma once

#include "vgamba/module.hpp"
#include "vgamba/ops.hpp"

namespace vgamba {

// Largest divisor of `channels` not exceeding 32; group count used by the
// batch-independent normalization in the sequence-mixing stage.
int norm_groups_for(int channels);

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(const InitCtx& ctx, int in_ch, int out_ch, int kernel, int stride, int pad,
         bool with_bias = true);
  Var<T> forward(const Var<T>& x);

  int in_ch() const { return in_ch_; }
  int out_ch() const { return out_ch_; }

 private:
  int in_ch_, out_ch_, kernel_, stride_, pad_;
  Var<T> w_;
  std::optional<Var<T>> b_;
};

template <typename T>
class Linear : public Module<T> {
 public:
  Linear(const InitCtx& ctx, int in_features, int out_features, bool with_bias = true);
  Var<T> forward(const Var<T>& x);

 private:
  Var<T> w_;  // [in, out]
  std::optional<Var<T>> b_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(const InitCtx& ctx, int channels, T momentum = T(0.1), T eps = T(1e-5));
  Var<T> forward(const Var<T>& x);

 private:
  T momentum_, eps_;
  Var<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
};

template <typename T>
class GroupNorm : public Module<T> {
 public:
  GroupNorm(const InitCtx& ctx, int channels, int groups, T eps = T(1e-5));
  Var<T> forward(const Var<T>& x);

 private:
  int groups_;
  T eps_;
  Var<T> gamma_, beta_;
};

// Multi-head self-attention over a token sequence [B, M, C]. Projections
// carry no bias; scores are scaled by 1/sqrt(head_dim).
template <typename T>
class Mhsa : public Module<T> {
 public:
  Mhsa(const InitCtx& ctx, int channels, int heads);
  Var<T> forward(const Var<T>& x);

 private:
  int channels_, heads_;
  Var<T> wq_, wk_, wv_, wo_;  // each [C, C]
};

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class Linear<float>;
extern template class Linear<double>;
extern template class BatchNorm2d<float>;
extern template class BatchNorm2d<double>;
extern template class GroupNorm<float>;
extern template class GroupNorm<double>;
extern template class Mhsa<float>;
extern template class Mhsa<double>;

}  // namespace vgamba
