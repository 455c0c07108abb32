#pragma once

#include "vgamba/module.hpp"
#include "vgamba/ops.hpp"

namespace vgamba {

// Learnable state of one selective state-space layer over an inner width E
// and per-channel diagonal state of size N. The continuous state matrix is
// A = -exp(a_log), strictly negative, so every discrete decay lies in (0,1).
template <typename T>
class SsmParams : public Module<T> {
 public:
  SsmParams(const InitCtx& ctx, int inner_width, int state_size);

  int inner_width() const { return e_; }
  int state_size() const { return n_; }

  // A = -exp(a_log), rebuilt on demand so gradients reach a_log.
  Var<T> a_matrix() const;

  const Var<T>& a_log() const { return a_log_; }
  const Var<T>& d_skip() const { return d_skip_; }
  const Var<T>& b_weight() const { return b_weight_; }
  const Var<T>& b_bias() const { return b_bias_; }
  const Var<T>& c_weight() const { return c_weight_; }
  const Var<T>& c_bias() const { return c_bias_; }
  const Var<T>& dt_weight() const { return dt_weight_; }
  const Var<T>& dt_bias() const { return dt_bias_; }

 private:
  int e_, n_;
  Var<T> a_log_;     // [E, N]
  Var<T> d_skip_;    // [E]
  Var<T> b_weight_;  // [N, E]
  Var<T> b_bias_;    // [N]
  Var<T> c_weight_;  // [N, E]
  Var<T> c_bias_;    // [N]
  Var<T> dt_weight_;  // [E], elementwise
  Var<T> dt_bias_;    // [E]
};

// Input-dependent projections for one token sequence.
template <typename T>
struct Selective {
  Var<T> b_t;    // [B, M, N]
  Var<T> c_t;    // [B, M, N]
  Var<T> delta;  // [B, M, E], strictly positive (softplus)
};

template <typename T>
Selective<T> selective_parameters(const SsmParams<T>& params, const Var<T>& x_seq);

// One discretized step per token.
template <typename T>
struct DiscreteStep {
  Var<T> a_bar;  // [..., E, N], exp(A*delta) in (0,1)
  Var<T> b_bar;  // [..., E, N], ((exp(A*delta)-1)/A) * B, limit delta*B as A->0
};

// A: [E, N]; b_t: [..., N]; delta: [..., E] (must be positive).
template <typename T>
DiscreteStep<T> discretize_zoh(const Var<T>& A, const Var<T>& b_t, const Var<T>& delta);

// Causal recurrence h_k = a_bar_k*h_{k-1} + b_bar_k*x_k, y_k = c_k.h_k + d*x_k.
template <typename T>
Var<T> ssm_scan_causal(const SsmParams<T>& params, const Var<T>& x_seq);

// Direction-free variant: forward scan + reversed scan - the per-position self
// term counted by both. Every output position mixes with every input position.
template <typename T>
Var<T> ssm_scan_noncausal(const SsmParams<T>& params, const Var<T>& x_seq);

// Brute-force reference for the non-causal scan: materializes the full M x M
// mixing matrix per channel and applies it. Quadratic in M, guarded at 64.
template <typename T>
Tensor<T> dense_scan_oracle(const SsmParams<T>& params, const Tensor<T>& x_seq);

struct MambaBlockConfig {
  int channels = 0;
  double expansion = 2.0;  // inner width E = round(expansion * channels)
  int state_size = 16;
  int conv_kernel = 3;
};

// Gated block around the non-causal scan: project C->2E, split into main and
// gate, depthwise conv (centered) + SiLU on main, scan, multiply by
// SiLU(gate), project E->C, add the input back.
template <typename T>
class MambaBlock : public Module<T> {
 public:
  MambaBlock(const InitCtx& ctx, const MambaBlockConfig& cfg);
  Var<T> forward(const Var<T>& x_seq);  // [B, M, C] -> [B, M, C]

  int inner_width() const { return inner_; }
  const MambaBlockConfig& config() const { return cfg_; }
  SsmParams<T>& ssm() { return ssm_; }

 private:
  MambaBlockConfig cfg_;
  int inner_;
  Var<T> in_proj_;   // [C, 2E], no bias
  Var<T> conv_w_;    // [E, K]
  Var<T> conv_b_;    // [E]
  SsmParams<T> ssm_;
  Var<T> out_proj_;  // [E, C], no bias
};

extern template class SsmParams<float>;
extern template class SsmParams<double>;
extern template class MambaBlock<float>;
extern template class MambaBlock<double>;

}  // namespace vgamba
