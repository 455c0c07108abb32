#include "vgamba/gamba.hpp"

#include "vgamba/errors.hpp"
#include "vgamba/flops.hpp"

namespace vgamba {

template <typename T>
Var<T> to_sequence(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("expected [B,C,H,W], got " + shape_str(s));
  return reshape(permute(x, {0, 2, 3, 1}), {s[0], s[2] * s[3], s[1]});
}

template <typename T>
Var<T> from_sequence(const Var<T>& x, int64_t h, int64_t w) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[1] != h * w)
    throw ShapeError("expected [B," + std::to_string(h * w) + ",C], got " + shape_str(s));
  return permute(reshape(x, {s[0], h, w, s[2]}), {0, 3, 1, 2});
}

template <typename T>
Rpe2d<T>::Rpe2d(const InitCtx& ctx, int channels, int height, int width)
    : channels_(channels), height_(height), width_(width) {
  this->set_path(ctx.path);
  if (channels < 1 || height < 1 || width < 1) throw ConfigError("bad positional-encoding extents");
  r_h_ = Var<T>::leaf(Tensor<T>::zeros({channels, height}), true);
  r_w_ = Var<T>::leaf(Tensor<T>::zeros({channels, width}), true);
  this->register_parameter("r_h", r_h_);
  this->register_parameter("r_w", r_w_);
}

template <typename T>
Var<T> Rpe2d<T>::build(int64_t h, int64_t w, bool allow_resize) {
  if ((h != height_ || w != width_) && !allow_resize)
    throw ConfigError("positional encoding trained at " + std::to_string(height_) + "x" +
                      std::to_string(width_) + " applied to " + std::to_string(h) + "x" +
                      std::to_string(w));
  Var<T> rh = h == height_ ? r_h_ : resize_linear_lastdim(r_h_, h);
  Var<T> rw = w == width_ ? r_w_ : resize_linear_lastdim(r_w_, w);
  Var<T> grid = add(reshape(permute(rh, {1, 0}), {h, 1, channels_}),
                    reshape(permute(rw, {1, 0}), {1, w, channels_}));
  return reshape(grid, {1, h * w, channels_});
}

template <typename T>
GambaCell<T>::GambaCell(const InitCtx& ctx, const GambaCellConfig& cfg)
    : cfg_(cfg),
      block_(ctx.child("block"),
             MambaBlockConfig{cfg.channels, cfg.expansion, cfg.state_size, 3}) {
  this->set_path(ctx.path);
  if (cfg.height < 1 || cfg.width < 1) throw ConfigError("cell needs positive spatial extents");
  if (cfg.use_rpe) {
    rpe_ = std::make_unique<Rpe2d<T>>(ctx.child("rpe"), cfg.channels, cfg.height, cfg.width);
    this->register_module("rpe", rpe_.get());
  }
  this->register_module("block", &block_);
}

template <typename T>
Rpe2d<T>& GambaCell<T>::rpe() {
  if (!rpe_) throw ConfigError("cell was built without positional offsets");
  return *rpe_;
}

template <typename T>
Var<T> GambaCell<T>::forward(const Var<T>& x) {
  FlopScope scope(this->path());
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != cfg_.channels)
    throw ShapeError("cell expects [B," + std::to_string(cfg_.channels) + ",H,W], got " +
                     shape_str(s));
  const int64_t h = s[2], w = s[3];
  Var<T> seq = to_sequence(x);
  if (rpe_) seq = add(seq, rpe_->build(h, w, cfg_.resize_rpe));
  seq = block_.forward(seq);
  Var<T> y = from_sequence(seq, h, w);
  NanProbe::report(this->path(), y.value());
  return y;
}

template Var<float> to_sequence(const Var<float>&);
template Var<double> to_sequence(const Var<double>&);
template Var<float> from_sequence(const Var<float>&, int64_t, int64_t);
template Var<double> from_sequence(const Var<double>&, int64_t, int64_t);

template class Rpe2d<float>;
template class Rpe2d<double>;
template class GambaCell<float>;
template class GambaCell<double>;

}  // namespace vgamba
