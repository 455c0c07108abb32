#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "vgamba/asc.hpp"
#include "vgamba/gamba.hpp"
#include "vgamba/nn.hpp"

namespace vgamba {

enum class MixerKind { conv, gamba, attention };

MixerKind mixer_from_string(const std::string& s);
std::string mixer_to_string(MixerKind k);

// Variant descriptor. Stage s uses a reduced width of base_width << s inside
// the bottleneck and emits 4x that. Stage strides relative to the input are
// 4, 8, 16, 32.
struct BackboneSpec {
  std::string variant = "vgamba-b";
  std::array<int, 4> depths{3, 4, 6, 3};
  int base_width = 64;
  int num_classes = 1000;  // 0 disables the classification head
  MixerKind mixer = MixerKind::gamba;
  bool use_rpe = true;
  bool use_asc = true;
  int state_size = 16;
  // Scan width over the bottleneck's reduced width. At 1/2 the stage-4 mixer
  // is cheaper than the 3x3 convolution it replaces, which is what lets the
  // B/L/X variants undercut the equal-depth conv baselines.
  double gamba_expansion = 0.5;
  int attn_heads = 4;
  int input_extent = 224;  // resolution the positional encodings bind to
  bool dense_head = false;
  int dense_out_channels = 1;
};

// Named presets: vgamba-b | vgamba-l | vgamba-x | tiny. The tiny preset is
// the desk-scale family (widths / 8, depths [2,2,2,2], 64^2 input).
BackboneSpec make_spec(const std::string& variant);

// Normalization selected per block kind: batch statistics in conv stages,
// group statistics where the mixer is batch-size sensitive.
template <typename T>
class Norm2d : public Module<T> {
 public:
  Norm2d(const InitCtx& ctx, int channels, bool batch);
  Var<T> forward(const Var<T>& x);

 private:
  std::unique_ptr<BatchNorm2d<T>> bn_;
  std::unique_ptr<GroupNorm<T>> gn_;
};

// 1x1 reduce -> spatial mixer -> 1x1 expand with residual. A stride-2 block
// with a non-conv mixer mixes at the input resolution and then average-pools,
// so the mixer always sees the finer grid.
template <typename T>
class BottleneckBlock : public Module<T> {
 public:
  BottleneckBlock(const InitCtx& ctx, const BackboneSpec& spec, int in_ch, int reduced, int out_ch,
                  int stride, MixerKind mixer, int height, int width);
  Var<T> forward(const Var<T>& x);

  GambaCell<T>* cell() { return cell_.get(); }

 private:
  int stride_;
  MixerKind mixer_;
  Conv2d<T> reduce_;
  Norm2d<T> norm1_;
  std::unique_ptr<Conv2d<T>> mixer_conv_;
  std::unique_ptr<GambaCell<T>> cell_;
  std::unique_ptr<Asc<T>> asc_;
  std::unique_ptr<Mhsa<T>> attn_;
  Norm2d<T> norm2_;
  Conv2d<T> expand_;
  Norm2d<T> norm3_;
  std::unique_ptr<Conv2d<T>> skip_conv_;
  std::unique_ptr<Norm2d<T>> skip_norm_;
};

// Upsampling decoder for dense per-pixel outputs: 1x1 entry, five
// double-resolution steps (nearest neighbour + 3x3 conv + group norm + ReLU),
// linear 1x1 exit. Five doublings undo the backbone's 1/32 stride.
template <typename T>
class DenseDecoder : public Module<T> {
 public:
  DenseDecoder(const InitCtx& ctx, int in_ch, int out_ch);
  Var<T> forward(const Var<T>& x);

 private:
  Conv2d<T> entry_;
  std::vector<std::unique_ptr<Conv2d<T>>> convs_;
  std::vector<std::unique_ptr<GroupNorm<T>>> norms_;
  Conv2d<T> exit_;
};

template <typename T>
class Backbone : public Module<T> {
 public:
  Backbone(const BackboneSpec& spec, uint64_t seed);

  // Stage outputs [stem, stage1..stage4] at strides 4, 4, 8, 16, 32.
  std::vector<Var<T>> forward_features(const Var<T>& x);
  Var<T> forward(const Var<T>& x);        // [B,3,H,W] -> [B,num_classes]
  Var<T> forward_dense(const Var<T>& x);  // [B,3,H,W] -> [B,out_ch,H,W]

  const BackboneSpec& spec() const { return spec_; }
  int64_t count_parameters() const { return this->parameter_count(); }
  int stage_width(int stage) const;  // channel width of forward_features[stage]

 private:
  BackboneSpec spec_;
  Conv2d<T> stem_conv_;
  BatchNorm2d<T> stem_bn_;
  std::vector<std::vector<std::unique_ptr<BottleneckBlock<T>>>> stages_;
  std::unique_ptr<Linear<T>> fc_;
  std::unique_ptr<DenseDecoder<T>> decoder_;
};

extern template class Norm2d<float>;
extern template class Norm2d<double>;
extern template class BottleneckBlock<float>;
extern template class BottleneckBlock<double>;
extern template class DenseDecoder<float>;
extern template class DenseDecoder<double>;
extern template class Backbone<float>;
extern template class Backbone<double>;

}  // namespace vgamba
