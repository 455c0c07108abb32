#include "vgamba/backbone.hpp"

#include "vgamba/errors.hpp"
#include "vgamba/flops.hpp"

namespace vgamba {

MixerKind mixer_from_string(const std::string& s) {
  if (s == "conv") return MixerKind::conv;
  if (s == "gamba") return MixerKind::gamba;
  if (s == "attention") return MixerKind::attention;
  throw ConfigError("unknown mixer kind \"" + s + "\" (conv | gamba | attention)");
}

std::string mixer_to_string(MixerKind k) {
  switch (k) {
    case MixerKind::conv: return "conv";
    case MixerKind::gamba: return "gamba";
    default: return "attention";
  }
}

BackboneSpec make_spec(const std::string& variant) {
  BackboneSpec s;
  s.variant = variant;
  if (variant == "vgamba-b") {
    s.depths = {3, 4, 6, 3};
  } else if (variant == "vgamba-l") {
    s.depths = {3, 4, 23, 3};
  } else if (variant == "vgamba-x") {
    s.depths = {3, 8, 36, 3};
  } else if (variant == "tiny") {
    s.depths = {2, 2, 2, 2};
    s.base_width = 8;
    s.num_classes = 10;
    s.input_extent = 64;
    // No parameter budget to hit at desk scale, so the scan gets its full
    // double-width inner dimension.
    s.gamba_expansion = 2.0;
  } else {
    throw ConfigError("unknown variant \"" + variant + "\" (vgamba-b | vgamba-l | vgamba-x | tiny)");
  }
  return s;
}

template <typename T>
Norm2d<T>::Norm2d(const InitCtx& ctx, int channels, bool batch) {
  this->set_path(ctx.path);
  if (batch) {
    bn_ = std::make_unique<BatchNorm2d<T>>(ctx, channels);
    this->register_module("bn", bn_.get());
  } else {
    gn_ = std::make_unique<GroupNorm<T>>(ctx, channels, norm_groups_for(channels));
    this->register_module("gn", gn_.get());
  }
}

template <typename T>
Var<T> Norm2d<T>::forward(const Var<T>& x) {
  return bn_ ? bn_->forward(x) : gn_->forward(x);
}

template <typename T>
BottleneckBlock<T>::BottleneckBlock(const InitCtx& ctx, const BackboneSpec& spec, int in_ch,
                                    int reduced, int out_ch, int stride, MixerKind mixer,
                                    int height, int width)
    : stride_(stride),
      mixer_(mixer),
      reduce_(ctx.child("reduce"), in_ch, reduced, 1, 1, 0, false),
      norm1_(ctx.child("norm1"), reduced, mixer == MixerKind::conv),
      norm2_(ctx.child("norm2"), reduced, mixer == MixerKind::conv),
      expand_(ctx.child("expand"), reduced, out_ch, 1, 1, 0, false),
      norm3_(ctx.child("norm3"), out_ch, mixer == MixerKind::conv) {
  this->set_path(ctx.path);
  if (stride != 1 && stride != 2) throw ConfigError("block stride must be 1 or 2");

  switch (mixer) {
    case MixerKind::conv:
      mixer_conv_ = std::make_unique<Conv2d<T>>(ctx.child("mixer"), reduced, reduced, 3, stride, 1,
                                                false);
      this->register_module("mixer", mixer_conv_.get());
      break;
    case MixerKind::gamba: {
      GambaCellConfig cc;
      cc.channels = reduced;
      cc.height = height;
      cc.width = width;
      cc.state_size = spec.state_size;
      cc.expansion = spec.gamba_expansion;
      cc.use_rpe = spec.use_rpe;
      cc.use_asc = spec.use_asc;
      cell_ = std::make_unique<GambaCell<T>>(ctx.child("cell"), cc);
      this->register_module("cell", cell_.get());
      if (spec.use_asc) {
        asc_ = std::make_unique<Asc<T>>(ctx.child("asc"), reduced);
        this->register_module("asc", asc_.get());
      }
      break;
    }
    case MixerKind::attention:
      attn_ = std::make_unique<Mhsa<T>>(ctx.child("attn"), reduced, spec.attn_heads);
      this->register_module("attn", attn_.get());
      break;
  }

  if (stride != 1 || in_ch != out_ch) {
    skip_conv_ = std::make_unique<Conv2d<T>>(ctx.child("skip"), in_ch, out_ch, 1, stride, 0, false);
    skip_norm_ = std::make_unique<Norm2d<T>>(ctx.child("skip_norm"), out_ch,
                                             mixer == MixerKind::conv);
    this->register_module("skip", skip_conv_.get());
    this->register_module("skip_norm", skip_norm_.get());
  }

  this->register_module("reduce", &reduce_);
  this->register_module("norm1", &norm1_);
  this->register_module("norm2", &norm2_);
  this->register_module("expand", &expand_);
  this->register_module("norm3", &norm3_);
}

template <typename T>
Var<T> BottleneckBlock<T>::forward(const Var<T>& x) {
  FlopScope scope(this->path());
  Var<T> h = relu(norm1_.forward(reduce_.forward(x)));

  switch (mixer_) {
    case MixerKind::conv:
      h = mixer_conv_->forward(h);  // carries the stride
      break;
    case MixerKind::gamba:
      h = cell_->forward(h);
      if (asc_) h = asc_->forward(h);
      if (stride_ == 2) h = avgpool2d(h, 2, 2);
      break;
    case MixerKind::attention: {
      const Shape& s = h.shape();
      h = from_sequence(attn_->forward(to_sequence(h)), s[2], s[3]);
      if (stride_ == 2) h = avgpool2d(h, 2, 2);
      break;
    }
  }
  h = relu(norm2_.forward(h));
  h = norm3_.forward(expand_.forward(h));

  Var<T> skip = x;
  if (skip_conv_) skip = skip_norm_->forward(skip_conv_->forward(skip));
  Var<T> y = relu(add(h, skip));
  NanProbe::report(this->path(), y.value());
  return y;
}

template <typename T>
DenseDecoder<T>::DenseDecoder(const InitCtx& ctx, int in_ch, int out_ch)
    : entry_(ctx.child("entry"), in_ch, 64, 1, 1, 0, true),
      exit_(ctx.child("exit"), 16, out_ch, 1, 1, 0, true) {
  this->set_path(ctx.path);
  const int widths[6] = {64, 48, 32, 24, 16, 16};
  for (int i = 0; i < 5; ++i) {
    convs_.push_back(std::make_unique<Conv2d<T>>(ctx.child("conv" + std::to_string(i)), widths[i],
                                                 widths[i + 1], 3, 1, 1, false));
    norms_.push_back(std::make_unique<GroupNorm<T>>(ctx.child("norm" + std::to_string(i)),
                                                    widths[i + 1], norm_groups_for(widths[i + 1])));
  }
  this->register_module("entry", &entry_);
  for (int i = 0; i < 5; ++i) {
    this->register_module("conv" + std::to_string(i), convs_[static_cast<size_t>(i)].get());
    this->register_module("norm" + std::to_string(i), norms_[static_cast<size_t>(i)].get());
  }
  this->register_module("exit", &exit_);
}

template <typename T>
Var<T> DenseDecoder<T>::forward(const Var<T>& x) {
  FlopScope scope(this->path());
  Var<T> h = entry_.forward(x);
  for (size_t i = 0; i < convs_.size(); ++i)
    h = relu(norms_[i]->forward(convs_[i]->forward(upsample_nearest2x(h))));
  return exit_.forward(h);
}

template <typename T>
Backbone<T>::Backbone(const BackboneSpec& spec, uint64_t seed)
    : spec_(spec),
      stem_conv_(InitCtx{seed, "stem"}.child("conv"), 3, spec.base_width, 7, 2, 3, false),
      stem_bn_(InitCtx{seed, "stem"}.child("bn"), spec.base_width) {
  this->set_path("");
  InitCtx root{seed, ""};
  if (spec.base_width < 1) throw ConfigError("base width must be positive");
  if (spec.input_extent % 32 != 0) throw ConfigError("input extent must be divisible by 32");
  for (int d : spec.depths)
    if (d < 1) throw ConfigError("every stage needs at least one block");

  this->register_module("stem.conv", &stem_conv_);
  this->register_module("stem.bn", &stem_bn_);

  int in_ch = spec.base_width;
  int extent = spec.input_extent / 4;  // after the stem
  stages_.resize(4);
  for (int s = 0; s < 4; ++s) {
    const int reduced = spec.base_width << s;
    const int out_ch = reduced * 4;
    const int stage_stride = s == 0 ? 1 : 2;
    InitCtx stage_ctx = root.child("s" + std::to_string(s + 1));
    for (int b = 0; b < spec.depths[static_cast<size_t>(s)]; ++b) {
      const int stride = b == 0 ? stage_stride : 1;
      const MixerKind mixer = s == 3 ? spec.mixer : MixerKind::conv;
      // A stride-2 non-conv mixer runs before its pool, at the incoming grid.
      auto block = std::make_unique<BottleneckBlock<T>>(stage_ctx.child("b" + std::to_string(b)),
                                                        spec, in_ch, reduced, out_ch, stride, mixer,
                                                        extent, extent);
      this->register_module("s" + std::to_string(s + 1) + ".b" + std::to_string(b), block.get());
      stages_[static_cast<size_t>(s)].push_back(std::move(block));
      if (stride == 2) extent /= 2;
      in_ch = out_ch;
    }
  }

  if (spec.num_classes > 0) {
    fc_ = std::make_unique<Linear<T>>(root.child("fc"), in_ch, spec.num_classes, true);
    this->register_module("fc", fc_.get());
  }
  if (spec.dense_head) {
    decoder_ = std::make_unique<DenseDecoder<T>>(root.child("dec"), in_ch,
                                                 spec.dense_out_channels);
    this->register_module("dec", decoder_.get());
  }
}

template <typename T>
int Backbone<T>::stage_width(int stage) const {
  if (stage < 0 || stage > 4) throw ConfigError("stage must be in 0..4");
  if (stage == 0) return spec_.base_width;
  return (spec_.base_width << (stage - 1)) * 4;
}

template <typename T>
std::vector<Var<T>> Backbone<T>::forward_features(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 3) throw ShapeError("expected [B,3,H,W] input, got " + shape_str(s));
  if (s[2] % 32 != 0 || s[3] % 32 != 0)
    throw ConfigError("input extents must be divisible by 32, got " + shape_str(s));

  std::vector<Var<T>> features;
  Var<T> h;
  {
    FlopScope scope(std::string("stem"));
    h = maxpool2d(relu(stem_bn_.forward(stem_conv_.forward(x))), 3, 2, 1);
  }
  features.push_back(h);
  for (auto& stage : stages_) {
    for (auto& block : stage) h = block->forward(h);
    features.push_back(h);
  }
  return features;
}

template <typename T>
Var<T> Backbone<T>::forward(const Var<T>& x) {
  if (!fc_) throw ConfigError("model built without a classification head");
  Var<T> h = forward_features(x).back();
  return fc_->forward(reduce_mean(h, {2, 3}, false));
}

template <typename T>
Var<T> Backbone<T>::forward_dense(const Var<T>& x) {
  if (!decoder_) throw ConfigError("model built without a dense head");
  return decoder_->forward(forward_features(x).back());
}

template class Norm2d<float>;
template class Norm2d<double>;
template class BottleneckBlock<float>;
template class BottleneckBlock<double>;
template class DenseDecoder<float>;
template class DenseDecoder<double>;
template class Backbone<float>;
template class Backbone<double>;

}  // namespace vgamba
