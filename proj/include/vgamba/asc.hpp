#pragma once

#include "vgamba/nn.hpp"

namespace vgamba {

// Axis means of a feature map: (mean over width [B,C,H,1], mean over height
// [B,C,1,W]).
template <typename T>
std::pair<Var<T>, Var<T>> coordinate_pool(const Var<T>& x);

// Attentive spatial context: the two pooled descriptors pass through a shared
// channel reduction and per-axis expansions, get per-axis biases, and are
// fused by a learned per-channel convex combination into a sigmoid gate that
// rescales the input. Output magnitude never exceeds the input's.
template <typename T>
class Asc : public Module<T> {
 public:
  Asc(const InitCtx& ctx, int channels, int reduction = 32);
  Var<T> forward(const Var<T>& x);  // [B,C,H,W] -> [B,C,H,W]

  int mid_width() const { return mid_; }

 private:
  int channels_, mid_;
  Conv2d<T> reduce_;    // 1x1, C -> mid, shared by both axes
  Conv2d<T> expand_h_;  // 1x1, mid -> C, no bias
  Conv2d<T> expand_w_;  // 1x1, mid -> C, no bias
  Var<T> b_h_, b_w_;    // [C], the per-axis biases
  Var<T> alpha_raw_;    // [C]; alpha = sigmoid(alpha_raw) blends the axes
};

extern template class Asc<float>;
extern template class Asc<double>;

}  // namespace vgamba
