#include "vgamba/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "vgamba/errors.hpp"
#include "vgamba/parallel.hpp"

namespace vgamba {

int64_t flops_analytic(const ComplexityQuery& q) {
  if (q.m < 1 || q.d < 1) throw ConfigError("complexity query needs M >= 1 and D >= 1");
  if (q.kind == "attention") return 4 * q.m * q.d * q.d + 2 * q.m * q.m * q.d;
  if (q.kind == "ssm") {
    if (q.n < 1) throw ConfigError("ssm complexity query needs the state size N");
    return 3 * q.m * (2 * q.d) * q.n + q.m * (2 * q.d) * q.n;
  }
  if (q.kind == "cnn") {
    if (q.k < 1) throw ConfigError("cnn complexity query needs the kernel size K");
    return q.m * q.k * q.k * q.d * q.d;
  }
  throw ConfigError("unknown mixer kind \"" + q.kind + "\" (attention | ssm | cnn)");
}

template <typename T>
FlopRecorder flops_empirical(Backbone<T>& model, const Shape& input_shape) {
  NoGradGuard ng;
  const bool was_training = model.training();
  model.set_training(false);
  FlopRecorder recorder;
  {
    FlopCapture capture(recorder);
    Var<T> x = Var<T>::leaf(Tensor<T>::zeros(input_shape));
    if (model.spec().num_classes > 0)
      model.forward(x);
    else if (model.spec().dense_head)
      model.forward_dense(x);
    else
      model.forward_features(x);
  }
  model.set_training(was_training);
  return recorder;
}

ScalingFit scaling_fit(const std::vector<std::pair<int64_t, double>>& timings) {
  if (timings.size() < 4) throw ConfigError("scaling fit needs at least 4 points");
  std::vector<double> lx, ly;
  for (const auto& [m, sec] : timings) {
    if (m < 1 || sec <= 0.0) throw NumericalError("scaling fit needs positive sizes and timings");
    lx.push_back(std::log(static_cast<double>(m)));
    ly.push_back(std::log(sec));
  }
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw NumericalError("scaling fit needs at least two distinct sizes");
  ScalingFit fit;
  fit.exponent = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - fit.exponent * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (size_t i = 0; i < lx.size(); ++i) {
    const double pred = intercept + fit.exponent * lx[i];
    ss_res += (ly[i] - pred) * (ly[i] - pred);
    ss_tot += (ly[i] - mean_y) * (ly[i] - mean_y);
  }
  fit.r2 = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

template <typename T>
ErfMap erf_map_probe(const std::function<Var<T>(const Var<T>&)>& probe, int channels,
                     int input_extent, int n_samples, uint64_t seed) {
  if (channels < 1 || input_extent < 1) throw ConfigError("probe needs positive channels and extent");
  if (n_samples < 1) throw ConfigError("need at least one probe input");
  Rng rng(derive_seed(seed, "erf"));

  Tensor<double> acc = Tensor<double>::zeros({input_extent, input_extent});
  for (int s = 0; s < n_samples; ++s) {
    Var<T> x = Var<T>::leaf(rng.normal_tensor<T>({1, channels, input_extent, input_extent}), true);
    Var<T> f = probe(x);
    const Shape& fs = f.shape();
    if (fs.size() < 2) throw ShapeError("probe output needs two trailing spatial axes");
    const int w_axis = static_cast<int>(fs.size()) - 1;
    const int h_axis = w_axis - 1;
    Var<T> center =
        sum_all(slice(slice(f, w_axis, fs[w_axis] / 2, 1), h_axis, fs[h_axis] / 2, 1));
    center.backward();
    const Tensor<T>& g = x.grad_const();
    for (int64_t y = 0; y < input_extent; ++y)
      for (int64_t xx = 0; xx < input_extent; ++xx) {
        double v = 0.0;
        for (int64_t c = 0; c < channels; ++c)
          v += std::abs(static_cast<double>(g[(c * input_extent + y) * input_extent + xx]));
        acc[y * input_extent + xx] += v;
      }
  }

  double peak = 0.0;
  for (int64_t i = 0; i < acc.numel(); ++i) peak = std::max(peak, acc[i]);
  if (peak > 0.0)
    for (int64_t i = 0; i < acc.numel(); ++i) acc[i] /= peak;
  ErfMap map;
  map.values = std::move(acc);
  return map;
}

template <typename T>
ErfMap erf_map(Backbone<T>& model, int stage, int input_extent, int n_samples, uint64_t seed) {
  if (stage < 0 || stage > 4) throw ConfigError("stage must be in 0..4");
  const bool was_training = model.training();
  model.set_training(false);
  std::function<Var<T>(const Var<T>&)> probe = [&model, stage](const Var<T>& x) {
    return model.forward_features(x)[static_cast<size_t>(stage)];
  };
  ErfMap map = erf_map_probe<T>(probe, 3, input_extent, n_samples, seed);
  model.set_training(was_training);
  return map;
}

double erf_area_fraction(const ErfMap& map, double threshold) {
  if (map.values.numel() == 0) return 0.0;
  int64_t hits = 0;
  for (int64_t i = 0; i < map.values.numel(); ++i)
    if (map.values[i] >= threshold) ++hits;
  return static_cast<double>(hits) / static_cast<double>(map.values.numel());
}

namespace {

// Times fn() repeatedly, doubling repetitions until the batch spends at least
// min_seconds, then reports seconds per call.
template <typename Fn>
BenchPoint time_point(int64_t m, double min_seconds, Fn&& fn) {
  fn();  // warmup
  int reps = 1;
  for (;;) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    if (dt.count() >= min_seconds || reps >= (1 << 20))
      return BenchPoint{m, dt.count() / reps, reps};
    reps *= 2;
  }
}

}  // namespace

template <typename T>
std::vector<BenchPoint> bench_scan_scaling(const std::vector<int64_t>& ms, int inner_width,
                                           int state_size, double min_seconds, uint64_t seed) {
  if (ms.size() < 4) throw ConfigError("need at least 4 sequence lengths");
  set_thread_cap(1);
  NoGradGuard ng;
  SsmParams<T> params(InitCtx{seed, "bench_scan"}, inner_width, state_size);
  Rng rng(derive_seed(seed, "bench_scan_input"));
  std::vector<BenchPoint> points;
  for (int64_t m : ms) {
    Var<T> x = Var<T>::leaf(rng.normal_tensor<T>({1, m, inner_width}));
    points.push_back(time_point(m, min_seconds, [&] { ssm_scan_causal(params, x); }));
  }
  set_thread_cap(0);
  return points;
}

template <typename T>
std::vector<BenchPoint> bench_attention_scaling(const std::vector<int64_t>& ms, int channels,
                                                int heads, double min_seconds, uint64_t seed) {
  if (ms.size() < 4) throw ConfigError("need at least 4 sequence lengths");
  set_thread_cap(1);
  NoGradGuard ng;
  Mhsa<T> attn(InitCtx{seed, "bench_attn"}, channels, heads);
  Rng rng(derive_seed(seed, "bench_attn_input"));
  std::vector<BenchPoint> points;
  for (int64_t m : ms) {
    Var<T> x = Var<T>::leaf(rng.normal_tensor<T>({1, m, channels}));
    points.push_back(time_point(m, min_seconds, [&] { attn.forward(x); }));
  }
  set_thread_cap(0);
  return points;
}

// ---- gradient battery ----

namespace {

using Case = std::pair<std::string, GradReport<double>>;

Var<double> weighted_sum(const Var<double>& y, Rng& rng) {
  return sum_all(mul(y, Var<double>::leaf(rng.normal_tensor<double>(y.shape()))));
}

GradReport<double> merge(const GradReport<double>& a, const GradReport<double>& b) {
  GradReport<double> out = a.max_rel_error >= b.max_rel_error ? a : b;
  out.passed = a.passed && b.passed;
  out.max_abs_error = std::max(a.max_abs_error, b.max_abs_error);
  return out;
}

template <typename M>
GradReport<double> check_all_params(M& module, const std::function<Var<double>()>& loss_fn,
                                    Rng& rng, double eps, double tol) {
  GradReport<double> agg;
  agg.passed = true;
  for (auto& [name, p] : module.named_parameters()) {
    Var<double> pv = p;
    // A linear term on the checked parameter keeps every coordinate's true
    // gradient away from exact zero, where the relative-error metric is
    // meaningless against difference-quotient noise.
    Var<double> bypass = Var<double>::leaf(rng.normal_tensor<double>(pv.shape()));
    auto loss = [&loss_fn, pv, bypass]() {
      return add(loss_fn(), sum_all(mul(pv, bypass)));
    };
    agg = merge(agg, check_param_gradients<double>(loss, pv, eps, tol));
  }
  return agg;
}

}  // namespace

std::vector<Case> gradcheck_battery(uint64_t seed, int rounds) {
  const double eps = 1e-5, tol = 1e-4;
  std::vector<Case> cases;

  for (int round = 0; round < rounds; ++round) {
    const uint64_t rs = derive_seed(seed, "round" + std::to_string(round));
    const std::string tag = rounds > 1 ? "#" + std::to_string(round) : "";
    Rng rng(derive_seed(rs, "weights"));

    // Input-side check with a linear bypass so no input coordinate has an
    // exactly zero gradient.
    auto check_input = [&](const std::string& name, const Tensor<double>& x,
                           const std::function<Var<double>(const Var<double>&)>& f) {
      Var<double> bypass = Var<double>::leaf(rng.normal_tensor<double>(x.shape()));
      auto g = [&f, bypass](const Var<double>& v) {
        return add(f(v), sum_all(mul(v, bypass)));
      };
      cases.emplace_back(name + tag, check_gradients<double>(g, x, eps, tol));
    };

    Rng drng(derive_seed(rs, "data"));

    {  // discretization against both the step and the state-matrix inputs
      const int e = 3, n = 2, m = 4;
      Tensor<double> a_raw = drng.uniform_tensor<double>({e, n}, -1.0, 1.0);
      Tensor<double> delta_raw = drng.normal_tensor<double>({1, m, e});
      Tensor<double> b_fixed = drng.normal_tensor<double>({1, m, n});
      Rng wrng(derive_seed(rs, "zoh_w"));
      Tensor<double> wa = wrng.normal_tensor<double>({1, m, e, n});
      Tensor<double> wb = wrng.normal_tensor<double>({1, m, e, n});
      Tensor<double> a_fixed({e, n});
      for (int64_t i = 0; i < a_fixed.numel(); ++i) a_fixed[i] = -std::exp(a_raw[i]);
      check_input("zoh_discretize_step", delta_raw, [&](const Var<double>& v) {
        DiscreteStep<double> st = discretize_zoh(Var<double>::leaf(a_fixed),
                                                 Var<double>::leaf(b_fixed), softplus(v));
        return add(sum_all(mul(st.a_bar, Var<double>::leaf(wa))),
                   sum_all(mul(st.b_bar, Var<double>::leaf(wb))));
      });
      check_input("zoh_discretize_state", a_raw, [&](const Var<double>& v) {
        DiscreteStep<double> st = discretize_zoh(neg(vexp(v)), Var<double>::leaf(b_fixed),
                                                 softplus(Var<double>::leaf(delta_raw)));
        return add(sum_all(mul(st.a_bar, Var<double>::leaf(wa))),
                   sum_all(mul(st.b_bar, Var<double>::leaf(wb))));
      });
    }

    {  // selective projections and both scan directions
      const int e = 4, n = 3, m = 5;
      SsmParams<double> params(InitCtx{derive_seed(rs, "ssm"), "p"}, e, n);
      Tensor<double> x = drng.normal_tensor<double>({1, m, e});
      check_input("selective_projections", x, [&](const Var<double>& v) {
        Selective<double> sel = selective_parameters(params, v);
        Rng w(derive_seed(rs, "sel_w"));
        return add(add(weighted_sum(sel.b_t, w), weighted_sum(sel.c_t, w)),
                   weighted_sum(sel.delta, w));
      });
      check_input("scan_causal_input", x, [&](const Var<double>& v) {
        Rng w(derive_seed(rs, "sc_w"));
        return weighted_sum(ssm_scan_causal(params, v), w);
      });
      check_input("scan_noncausal_input", x, [&](const Var<double>& v) {
        Rng w(derive_seed(rs, "snc_w"));
        return weighted_sum(ssm_scan_noncausal(params, v), w);
      });
      Var<double> xv = Var<double>::leaf(x);
      cases.emplace_back("scan_noncausal_params" + tag,
                         check_all_params(params,
                                          [&]() {
                                            Rng w(derive_seed(rs, "sp_w"));
                                            return weighted_sum(ssm_scan_noncausal(params, xv), w);
                                          },
                                          rng, eps, tol));
    }

    {  // gated block
      MambaBlockConfig cfg;
      cfg.channels = 4;
      cfg.expansion = 2.0;
      cfg.state_size = 3;
      MambaBlock<double> block(InitCtx{derive_seed(rs, "block"), "b"}, cfg);
      Tensor<double> x = drng.normal_tensor<double>({1, 6, 4});
      check_input("gated_block_input", x, [&](const Var<double>& v) {
        Rng w(derive_seed(rs, "blk_w"));
        return weighted_sum(block.forward(v), w);
      });
      Var<double> xv = Var<double>::leaf(x);
      cases.emplace_back("gated_block_params" + tag,
                         check_all_params(block,
                                          [&]() {
                                            Rng w(derive_seed(rs, "blkp_w"));
                                            return weighted_sum(block.forward(xv), w);
                                          },
                                          rng, eps, tol));
    }

    {  // spatial cell, positions included
      GambaCellConfig cc;
      cc.channels = 3;
      cc.height = 4;
      cc.width = 4;
      cc.state_size = 2;
      cc.expansion = 2.0;
      GambaCell<double> cell(InitCtx{derive_seed(rs, "cell"), "c"}, cc);
      // Positions start at zero; give them nonzero values so their gradient
      // path is exercised away from the symmetric point.
      for (auto& [name, p] : cell.named_parameters())
        if (name.find("rpe") != std::string::npos) {
          Rng prng(derive_seed(rs, "rpe_fill." + name));
          const_cast<Var<double>&>(p).value_mut() =
              prng.normal_tensor<double>(p.shape(), 0.0, 0.3);
        }
      Tensor<double> x = drng.normal_tensor<double>({1, 3, 4, 4});
      check_input("cell_input", x, [&](const Var<double>& v) {
        Rng w(derive_seed(rs, "cell_w"));
        return weighted_sum(cell.forward(v), w);
      });
      Var<double> xv = Var<double>::leaf(x);
      cases.emplace_back("cell_params" + tag,
                         check_all_params(cell,
                                          [&]() {
                                            Rng w(derive_seed(rs, "cellp_w"));
                                            return weighted_sum(cell.forward(xv), w);
                                          },
                                          rng, eps, tol));
    }

    {  // coordinate pooling and the gate
      Tensor<double> x = drng.normal_tensor<double>({1, 4, 5, 5});
      check_input("coordinate_pool", x, [&](const Var<double>& v) {
        auto [xh, xw] = coordinate_pool(v);
        Rng w(derive_seed(rs, "cp_w"));
        return add(weighted_sum(xh, w), weighted_sum(xw, w));
      });
      Asc<double> gate(InitCtx{derive_seed(rs, "asc"), "a"}, 4);
      check_input("gate_input", x, [&](const Var<double>& v) {
        Rng w(derive_seed(rs, "asc_w"));
        return weighted_sum(gate.forward(v), w);
      });
      Var<double> xv = Var<double>::leaf(x);
      cases.emplace_back("gate_params" + tag,
                         check_all_params(gate,
                                          [&]() {
                                            Rng w(derive_seed(rs, "ascp_w"));
                                            return weighted_sum(gate.forward(xv), w);
                                          },
                                          rng, eps, tol));
    }

    {  // end to end through a minimal backbone
      BackboneSpec spec;
      spec.variant = "gradcheck";
      spec.depths = {1, 1, 1, 1};
      spec.base_width = 4;
      spec.num_classes = 2;
      spec.input_extent = 32;
      spec.state_size = 2;
      Backbone<double> model(spec, derive_seed(rs, "bb"));
      model.set_training(false);
      Tensor<double> x = drng.normal_tensor<double>({1, 3, 32, 32});
      check_input("backbone_input", x, [&](const Var<double>& v) {
        Rng w(derive_seed(rs, "bb_w"));
        return weighted_sum(model.forward(v), w);
      });
    }
  }
  return cases;
}

template FlopRecorder flops_empirical(Backbone<float>&, const Shape&);
template FlopRecorder flops_empirical(Backbone<double>&, const Shape&);
template ErfMap erf_map_probe(const std::function<Var<float>(const Var<float>&)>&, int, int, int,
                              uint64_t);
template ErfMap erf_map_probe(const std::function<Var<double>(const Var<double>&)>&, int, int, int,
                              uint64_t);
template ErfMap erf_map(Backbone<float>&, int, int, int, uint64_t);
template ErfMap erf_map(Backbone<double>&, int, int, int, uint64_t);
template std::vector<BenchPoint> bench_scan_scaling<float>(const std::vector<int64_t>&, int, int,
                                                           double, uint64_t);
template std::vector<BenchPoint> bench_scan_scaling<double>(const std::vector<int64_t>&, int, int,
                                                            double, uint64_t);
template std::vector<BenchPoint> bench_attention_scaling<float>(const std::vector<int64_t>&, int,
                                                                int, double, uint64_t);
template std::vector<BenchPoint> bench_attention_scaling<double>(const std::vector<int64_t>&, int,
                                                                 int, double, uint64_t);

}  // namespace vgamba
