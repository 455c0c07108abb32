#pragma once

#include <memory>

#include "vgamba/ssm.hpp"

namespace vgamba {

// Row-major flattening of a feature map: element (b, h*W + w, c) of the
// output is X[b, c, h, w]. from_sequence is its exact inverse.
template <typename T>
Var<T> to_sequence(const Var<T>& x);  // [B,C,H,W] -> [B,HW,C]
template <typename T>
Var<T> from_sequence(const Var<T>& x, int64_t h, int64_t w);  // [B,HW,C] -> [B,C,H,W]

// Factorized additive positional signal: P[h*W+w, c] = r_h[c,h] + r_w[c,w].
// Costs C*(H+W) parameters instead of C*H*W. Zero-initialized so an untrained
// cell mixes purely by content.
template <typename T>
class Rpe2d : public Module<T> {
 public:
  Rpe2d(const InitCtx& ctx, int channels, int height, int width);

  // [1, h*w, C]; off-resolution extents are linearly resampled from the
  // trained ones when allow_resize is set.
  Var<T> build(int64_t h, int64_t w, bool allow_resize);

  const Var<T>& r_h() const { return r_h_; }
  const Var<T>& r_w() const { return r_w_; }

 private:
  int channels_, height_, width_;
  Var<T> r_h_;  // [C, H]
  Var<T> r_w_;  // [C, W]
};

struct GambaCellConfig {
  int channels = 0;
  int height = 0;
  int width = 0;
  int state_size = 16;
  double expansion = 2.0;
  bool use_rpe = true;
  bool use_asc = true;      // consumed by the enclosing bottleneck
  bool resize_rpe = true;   // re-interpolate positions at other resolutions
};

// Spatial wrapper around one gated scan block: flatten, add positions, mix,
// restore. Exactly one state-space layer per cell.
template <typename T>
class GambaCell : public Module<T> {
 public:
  GambaCell(const InitCtx& ctx, const GambaCellConfig& cfg);
  Var<T> forward(const Var<T>& x);  // [B,C,H,W] -> [B,C,H,W]

  const GambaCellConfig& config() const { return cfg_; }
  MambaBlock<T>& block() { return block_; }
  Rpe2d<T>& rpe();  // only exists when the config enables positions

 private:
  GambaCellConfig cfg_;
  std::unique_ptr<Rpe2d<T>> rpe_;
  MambaBlock<T> block_;
};

extern template class Rpe2d<float>;
extern template class Rpe2d<double>;
extern template class GambaCell<float>;
extern template class GambaCell<double>;

}  // namespace vgamba
