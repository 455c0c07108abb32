#include "vgamba/ssm.hpp"

#include <cmath>

#include "vgamba/errors.hpp"
#include "vgamba/flops.hpp"

namespace vgamba {

template <typename T>
SsmParams<T>::SsmParams(const InitCtx& ctx, int inner_width, int state_size)
    : e_(inner_width), n_(state_size) {
  this->set_path(ctx.path);
  if (e_ < 1 || n_ < 1) throw ConfigError("state-space widths must be positive");

  // A = -1..-N per channel: slowest mode keeps ~all state, fastest forgets.
  Tensor<T> a_log = Tensor<T>::zeros({e_, n_});
  for (int64_t e = 0; e < e_; ++e)
    for (int64_t n = 0; n < n_; ++n)
      a_log[e * n_ + n] = static_cast<T>(std::log(static_cast<double>(n + 1)));
  a_log_ = Var<T>::leaf(std::move(a_log), true);
  d_skip_ = Var<T>::leaf(Tensor<T>::ones({e_}), true);

  const double bound = 1.0 / std::sqrt(static_cast<double>(e_));
  Rng brng = ctx.rng("b_weight");
  b_weight_ = Var<T>::leaf(brng.uniform_tensor<T>({n_, e_}, -bound, bound), true);
  b_bias_ = Var<T>::leaf(Tensor<T>::zeros({n_}), true);
  Rng crng = ctx.rng("c_weight");
  c_weight_ = Var<T>::leaf(crng.uniform_tensor<T>({n_, e_}, -bound, bound), true);
  c_bias_ = Var<T>::leaf(Tensor<T>::zeros({n_}), true);

  Rng wrng = ctx.rng("dt_weight");
  dt_weight_ = Var<T>::leaf(wrng.uniform_tensor<T>({e_}, -bound, bound), true);
  // Bias chosen so softplus(bias) is log-uniform in [1e-3, 1e-1]: the layer
  // starts with a spread of retention timescales.
  Rng drng = ctx.rng("dt_bias");
  Tensor<T> dtb({e_});
  for (int64_t e = 0; e < e_; ++e) {
    const double dt = std::exp(drng.uniform(std::log(1e-3), std::log(1e-1)));
    dtb[e] = static_cast<T>(std::log(std::expm1(dt)));
  }
  dt_bias_ = Var<T>::leaf(std::move(dtb), true);

  this->register_parameter("a_log", a_log_);
  this->register_parameter("d_skip", d_skip_);
  this->register_parameter("b_weight", b_weight_);
  this->register_parameter("b_bias", b_bias_);
  this->register_parameter("c_weight", c_weight_);
  this->register_parameter("c_bias", c_bias_);
  this->register_parameter("dt_weight", dt_weight_);
  this->register_parameter("dt_bias", dt_bias_);
}

template <typename T>
Var<T> SsmParams<T>::a_matrix() const {
  return neg(vexp(a_log_));
}

template <typename T>
Selective<T> selective_parameters(const SsmParams<T>& params, const Var<T>& x_seq) {
  const Shape& s = x_seq.shape();
  if (s.size() != 3 || s[2] != params.inner_width())
    throw ShapeError("selective projections expect [B, M, E] input, got " + shape_str(s));
  Selective<T> out;
  Var<T> bw = permute(params.b_weight(), {1, 0});  // stored [N, E], applied as x.W^T
  Var<T> cw = permute(params.c_weight(), {1, 0});
  out.b_t = linear(x_seq, bw, std::optional<Var<T>>(params.b_bias()));
  out.c_t = linear(x_seq, cw, std::optional<Var<T>>(params.c_bias()));
  out.delta = softplus(add(mul(x_seq, params.dt_weight()), params.dt_bias()));
  return out;
}

template <typename T>
DiscreteStep<T> discretize_zoh(const Var<T>& A, const Var<T>& b_t, const Var<T>& delta) {
  const Tensor<T>& dv = delta.value();
  for (int64_t i = 0; i < dv.numel(); ++i)
    if (!(dv[i] > T(0))) throw NumericalError("discretization step must be positive");

  const Shape& ds = delta.shape();
  if (A.shape().size() != 2 || A.shape()[0] != ds.back())
    throw ShapeError("state matrix shape " + shape_str(A.shape()) + " does not match step shape " +
                     shape_str(ds));
  Shape dcol = ds;
  dcol.push_back(1);  // [..., E, 1] against A [E, N]

  DiscreteStep<T> step;
  Var<T> delta_col = reshape(delta, dcol);
  step.a_bar = vexp(mul(delta_col, A));
  Var<T> phi = zoh_phi(A, delta);  // [..., E, N]

  Shape brow = b_t.shape();
  brow.insert(brow.end() - 1, 1);  // [..., 1, N]
  step.b_bar = mul(phi, reshape(b_t, brow));
  return step;
}

namespace {

template <typename T>
Var<T> self_term(const DiscreteStep<T>& step, const Var<T>& x, const Var<T>& c_t,
                 const Var<T>& d_skip) {
  Shape crow = c_t.shape();
  crow.insert(crow.end() - 1, 1);  // [B, M, 1, N]
  Var<T> cb = reduce_sum(mul(step.b_bar, reshape(c_t, crow)), {3}, false);  // [B, M, E]
  return add(mul(cb, x), mul(x, d_skip));
}

}  // namespace

template <typename T>
Var<T> ssm_scan_causal(const SsmParams<T>& params, const Var<T>& x_seq) {
  Selective<T> sel = selective_parameters(params, x_seq);
  DiscreteStep<T> step = discretize_zoh(params.a_matrix(), sel.b_t, sel.delta);
  return scan_causal_raw(step.a_bar, step.b_bar, x_seq, sel.c_t, params.d_skip());
}

template <typename T>
Var<T> ssm_scan_noncausal(const SsmParams<T>& params, const Var<T>& x_seq) {
  Selective<T> sel = selective_parameters(params, x_seq);
  DiscreteStep<T> step = discretize_zoh(params.a_matrix(), sel.b_t, sel.delta);

  Var<T> fwd = scan_causal_raw(step.a_bar, step.b_bar, x_seq, sel.c_t, params.d_skip());
  // Same parameters ride along with their tokens through the reversal, so the
  // backward pass is the mirror image of the forward one.
  Var<T> bwd = reverse_axis(
      scan_causal_raw(reverse_axis(step.a_bar, 1), reverse_axis(step.b_bar, 1),
                      reverse_axis(x_seq, 1), reverse_axis(sel.c_t, 1), params.d_skip()),
      1);
  return sub(add(fwd, bwd), self_term(step, x_seq, sel.c_t, params.d_skip()));
}

template <typename T>
Tensor<T> dense_scan_oracle(const SsmParams<T>& params, const Tensor<T>& x_seq) {
  const Shape& s = x_seq.shape();
  if (s.size() != 3) throw ShapeError("oracle expects [B, M, E] input, got " + shape_str(s));
  const int64_t B = s[0], M = s[1], E = s[2], N = params.state_size();
  if (M > 64) throw ResourceError("dense oracle is quadratic in sequence length; max 64");

  NoGradGuard ng;
  Var<T> xv = Var<T>::leaf(x_seq);
  Selective<T> sel = selective_parameters(params, xv);
  DiscreteStep<T> step = discretize_zoh(params.a_matrix(), sel.b_t, sel.delta);
  const Tensor<T>& a_bar = step.a_bar.value();  // [B, M, E, N]
  const Tensor<T>& b_bar = step.b_bar.value();  // [B, M, E, N]
  const Tensor<T>& c_t = sel.c_t.value();       // [B, M, N]
  const Tensor<T>& d = params.d_skip().value();

  auto ab = [&](int64_t b, int64_t m, int64_t e, int64_t n) {
    return static_cast<double>(a_bar[((b * M + m) * E + e) * N + n]);
  };
  auto bb = [&](int64_t b, int64_t m, int64_t e, int64_t n) {
    return static_cast<double>(b_bar[((b * M + m) * E + e) * N + n]);
  };
  auto ct = [&](int64_t b, int64_t m, int64_t n) {
    return static_cast<double>(c_t[(b * M + m) * N + n]);
  };

  Tensor<T> y = Tensor<T>::zeros(s);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t e = 0; e < E; ++e)
      for (int64_t i = 0; i < M; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < M; ++j) {
          // weight(i<-j) = sum_n c_i[n] * decay(i,j)[n] * b_bar_j[n], where the
          // decay is the product of a_bar over the positions strictly between
          // the closer endpoint (exclusive) and the farther one (inclusive on
          // the receiving side), matching a scan run toward i from j.
          double w = 0.0;
          for (int64_t n = 0; n < N; ++n) {
            double decay = 1.0;
            if (j < i)
              for (int64_t u = j + 1; u <= i; ++u) decay *= ab(b, u, e, n);
            else if (j > i)
              for (int64_t u = i; u <= j - 1; ++u) decay *= ab(b, u, e, n);
            w += ct(b, i, n) * decay * bb(b, j, e, n);
          }
          if (j == i) w += static_cast<double>(d[e]);
          acc += w * static_cast<double>(x_seq[(b * M + j) * E + e]);
        }
        y[(b * M + i) * E + e] = static_cast<T>(acc);
      }
  return y;
}

template <typename T>
MambaBlock<T>::MambaBlock(const InitCtx& ctx, const MambaBlockConfig& cfg)
    : cfg_(cfg),
      inner_(std::max<int>(1, static_cast<int>(std::lround(cfg.expansion * cfg.channels)))),
      ssm_(ctx.child("ssm"), inner_, cfg.state_size) {
  this->set_path(ctx.path);
  if (cfg.channels < 1) throw ConfigError("block channel width must be positive");
  if (cfg.conv_kernel < 1 || cfg.conv_kernel % 2 == 0)
    throw ConfigError("short convolution kernel must be odd");

  const double in_bound = 1.0 / std::sqrt(static_cast<double>(cfg.channels));
  Rng irng = ctx.rng("in_proj");
  in_proj_ = Var<T>::leaf(irng.uniform_tensor<T>({cfg.channels, 2 * inner_}, -in_bound, in_bound),
                          true);
  const double k_bound = 1.0 / std::sqrt(static_cast<double>(cfg.conv_kernel));
  Rng krng = ctx.rng("conv_w");
  conv_w_ = Var<T>::leaf(krng.uniform_tensor<T>({inner_, cfg.conv_kernel}, -k_bound, k_bound), true);
  conv_b_ = Var<T>::leaf(Tensor<T>::zeros({inner_}), true);
  const double out_bound = 1.0 / std::sqrt(static_cast<double>(inner_));
  Rng orng = ctx.rng("out_proj");
  out_proj_ = Var<T>::leaf(orng.uniform_tensor<T>({inner_, cfg.channels}, -out_bound, out_bound),
                           true);

  this->register_parameter("in_proj", in_proj_);
  this->register_parameter("conv_w", conv_w_);
  this->register_parameter("conv_b", conv_b_);
  this->register_parameter("out_proj", out_proj_);
  this->register_module("ssm", &ssm_);
}

template <typename T>
Var<T> MambaBlock<T>::forward(const Var<T>& x_seq) {
  FlopScope scope(this->path());
  const Shape& s = x_seq.shape();
  if (s.size() != 3 || s[2] != cfg_.channels)
    throw ShapeError("block expects [B, M, C] input, got " + shape_str(s));

  Var<T> proj = matmul(x_seq, in_proj_);  // [B, M, 2E]
  Var<T> trunk = slice(proj, 2, 0, inner_);
  Var<T> gate = slice(proj, 2, inner_, inner_);
  trunk = silu(depthwise_conv1d(trunk, conv_w_, conv_b_));
  Var<T> mixed = ssm_scan_noncausal(ssm_, trunk);
  Var<T> y = matmul(mul(mixed, silu(gate)), out_proj_);
  y = add(y, x_seq);
  NanProbe::report(this->path(), y.value());
  return y;
}

template class SsmParams<float>;
template class SsmParams<double>;
template class MambaBlock<float>;
template class MambaBlock<double>;

template Selective<float> selective_parameters(const SsmParams<float>&, const Var<float>&);
template Selective<double> selective_parameters(const SsmParams<double>&, const Var<double>&);
template DiscreteStep<float> discretize_zoh(const Var<float>&, const Var<float>&, const Var<float>&);
template DiscreteStep<double> discretize_zoh(const Var<double>&, const Var<double>&,
                                             const Var<double>&);
template Var<float> ssm_scan_causal(const SsmParams<float>&, const Var<float>&);
template Var<double> ssm_scan_causal(const SsmParams<double>&, const Var<double>&);
template Var<float> ssm_scan_noncausal(const SsmParams<float>&, const Var<float>&);
template Var<double> ssm_scan_noncausal(const SsmParams<double>&, const Var<double>&);
template Tensor<float> dense_scan_oracle(const SsmParams<float>&, const Tensor<float>&);
template Tensor<double> dense_scan_oracle(const SsmParams<double>&, const Tensor<double>&);

}  // namespace vgamba
