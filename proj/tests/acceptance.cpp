// Release gate: one pass/fail line per numbered criterion. Exit code is the
// number of failed criteria, so a clean run exits 0.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "vgamba/analysis.hpp"
#include "vgamba/backbone.hpp"
#include "vgamba/gamba.hpp"
#include "vgamba/ssm.hpp"
#include "vgamba/transport.hpp"

using namespace vgamba;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void criterion(int n, const std::string& name, const std::function<Outcome()>& body) {
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("unexpected exception: ") + e.what();
  }
  std::cout << "criterion " << n << " [" << name << "]: " << (out.pass ? "PASS" : "FAIL")
            << " -- " << out.detail << std::endl;
  if (!out.pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

bool within(double value, double target, double rel) {
  return std::abs(value - target) <= rel * target;
}

Outcome check_parameter_budgets() {
  struct Row {
    const char* label;
    double target;
    bool conv;
  };
  const Row rows[] = {{"vgamba-b", 19.45e6, false},
                      {"vgamba-l", 38.44e6, false},
                      {"vgamba-x", 54.0e6, false},
                      {"conv baseline", 25.0e6, true}};
  bool ok = true;
  std::string detail;
  for (const Row& r : rows) {
    BackboneSpec spec = make_spec(r.conv ? "vgamba-b" : r.label);
    if (r.conv) spec.mixer = MixerKind::conv;
    int64_t params = 0;
    {
      Backbone<float> model(spec, 1);
      params = model.count_parameters();
    }
    const bool hit = within(static_cast<double>(params), r.target, 0.05);
    ok = ok && hit;
    detail += std::string(r.label) + " " + fmt(static_cast<double>(params) / 1e6) + "M vs " +
              fmt(r.target / 1e6) + "M" + (hit ? "" : " (out of band)") + "; ";
  }
  return {ok, detail};
}

Outcome check_flop_counts() {
  BackboneSpec spec = make_spec("vgamba-b");
  Backbone<float> model(spec, 1);
  FlopRecorder rec = flops_empirical(model, {1, 3, 224, 224});
  const double target = 3.88e9;
  const bool macs_ok = within(static_cast<double>(rec.total()), target, 0.15);

  const bool analytic_ok = flops_analytic({"attention", 2, 1, 0, 0}) == 16 &&
                           flops_analytic({"ssm", 1, 1, 1, 0}) == 8 &&
                           flops_analytic({"cnn", 1, 2, 0, 3}) == 36;

  std::string detail = "measured " + fmt(static_cast<double>(rec.total()) / 1e9) +
                       "G MACs vs 3.88G +-15% (" + fmt(2.0 * static_cast<double>(rec.total()) / 1e9) +
                       "G in the multiply+add convention); hand-checked closed forms " +
                       std::string(analytic_ok ? "match" : "DIFFER");
  return {macs_ok && analytic_ok, detail};
}

Outcome check_scan_against_oracle() {
  const double atol = 1e-8;
  double worst = 0.0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    for (int64_t m : {1, 2, 3, 4, 8, 16}) {
      SsmParams<double> p(InitCtx{derive_seed(seed, "gate_oracle"), "p"}, 4, 3);
      Rng rng(derive_seed(seed, "gate_oracle_x" + std::to_string(m)));
      Tensor<double> x = rng.normal_tensor<double>({2, m, 4});
      Tensor<double> fast = ssm_scan_noncausal(p, Var<double>::leaf(x)).value();
      Tensor<double> slow = dense_scan_oracle(p, x);
      for (int64_t i = 0; i < fast.numel(); ++i)
        worst = std::max(worst, std::abs(fast[i] - slow[i]));
    }
  }
  return {worst < atol, "direction-free scan vs dense oracle, 10 seeds, M in {1..16}: max |diff| " +
                            fmt(worst) + " (atol 1e-8)"};
}

Outcome check_gradients_battery() {
  const auto reports = gradcheck_battery(7, 20);
  bool ok = !reports.empty();
  double worst = 0.0;
  std::string failed;
  for (const auto& [name, rep] : reports) {
    worst = std::max(worst, rep.max_rel_error);
    if (!rep.passed) {
      ok = false;
      failed += name + " ";
    }
  }
  std::string detail = std::to_string(reports.size()) + " checks x 20 seeds, max rel err " +
                       fmt(worst);
  if (!failed.empty()) detail += "; FAILED: " + failed;
  return {ok, detail};
}

Outcome check_runtime_scaling() {
  const std::vector<int64_t> ms = {256, 512, 1024, 2048, 4096};
  auto to_pairs = [](const std::vector<BenchPoint>& v) {
    std::vector<std::pair<int64_t, double>> out;
    for (const BenchPoint& p : v) out.emplace_back(p.m, p.seconds);
    return out;
  };
  ScalingFit scan = scaling_fit(to_pairs(bench_scan_scaling<float>(ms, 32, 16, 0.02, 1)));
  ScalingFit attn = scaling_fit(to_pairs(bench_attention_scaling<float>(ms, 32, 4, 0.02, 1)));
  const bool ok = scan.exponent >= 0.8 && scan.exponent <= 1.3 && scan.r2 >= 0.98 &&
                  attn.exponent >= 1.7 && attn.exponent <= 2.3;
  return {ok, "scan exponent " + fmt(scan.exponent) + " (r2 " + fmt(scan.r2) +
                  "), attention exponent " + fmt(attn.exponent) + " (r2 " + fmt(attn.r2) + ")"};
}

Outcome check_transport_convergence() {
  auto dense_spec = [](MixerKind mixer) {
    BackboneSpec spec = make_spec("tiny");
    spec.mixer = mixer;
    spec.num_classes = 0;
    spec.dense_head = true;
    spec.dense_out_channels = 1;
    spec.input_extent = 64;
    return spec;
  };
  auto reach_epoch = [](const TrainHistory& h, double level) {
    for (size_t i = 0; i < h.epochs.size(); ++i)
      if (h.epochs[i].val_mse <= level) return static_cast<int>(i) + 1;
    return std::numeric_limits<int>::max();
  };

  int passing_seeds = 0;
  std::string detail;
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const auto data = gen_transport_dataset<float>(
        64, 200, {TransportShape::disc, TransportShape::box}, seed);
    TransportConfig tc;
    tc.seed = seed;

    Backbone<float> gamba(dense_spec(MixerKind::gamba), seed);
    const TrainHistory hg = train_transport(gamba, data, tc);
    Backbone<float> conv(dense_spec(MixerKind::conv), seed);
    const TrainHistory hc = train_transport(conv, data, tc);

    const double gamba_final = hg.epochs.back().val_mse;
    const double conv_final = hc.epochs.back().val_mse;
    const int gamba_reach = reach_epoch(hg, conv_final);
    const int conv_reach = reach_epoch(hc, conv_final);
    const bool lower = gamba_final < conv_final;
    const bool faster = gamba_reach < conv_reach;
    if (lower && faster) ++passing_seeds;

    detail += "seed " + std::to_string(seed) + ": final " + fmt(gamba_final) + " vs " +
              fmt(conv_final) + ", reached conv level at epoch " + std::to_string(gamba_reach) +
              " vs " + std::to_string(conv_reach) + (lower && faster ? "" : " (seed failed)") +
              "; ";
  }
  detail += std::to_string(passing_seeds) + "/3 seeds satisfy both clauses (need >= 2)";
  return {passing_seeds >= 2, detail};
}

Outcome check_erf_globality() {
  const int extent = 64;
  const int samples = 32;
  BackboneSpec gspec = make_spec("tiny");
  Backbone<double> gamba(gspec, 1);
  BackboneSpec cspec = gspec;
  cspec.mixer = MixerKind::conv;
  Backbone<double> conv(cspec, 1);

  double gfrac[5];
  for (int stage = 0; stage <= 4; ++stage) {
    gfrac[stage] = erf_area_fraction(erf_map(gamba, stage, extent, samples, 1), 0.05);
  }
  const double cfrac4 = erf_area_fraction(erf_map(conv, 4, extent, samples, 1), 0.05);

  const bool beats_conv = gfrac[4] > cfrac4;
  bool early_local = true;
  for (int stage = 0; stage <= 3; ++stage)
    early_local = early_local && gfrac[stage] < 0.25 * gfrac[4];

  std::string detail = "stage-4 fraction " + fmt(gfrac[4]) + " vs conv " + fmt(cfrac4) +
                       (beats_conv ? " (wider)" : " (NOT wider)") + "; early-stage fractions";
  for (int stage = 0; stage <= 3; ++stage) detail += " " + fmt(gfrac[stage]);
  detail += early_local ? " all below 25% of stage 4"
                        : " not all below 25% of stage 4 (bound "
                          + fmt(0.25 * gfrac[4]) +
                          "): the band-limited early stages keep most mass near the center "
                          "spike at this scale, so the locality clause does not hold on this "
                          "architecture";
  return {beats_conv && early_local, detail};
}

Outcome check_dense_jacobian() {
  GambaCellConfig cfg;
  cfg.channels = 2;
  cfg.height = 4;
  cfg.width = 4;
  cfg.state_size = 3;
  cfg.expansion = 2.0;
  GambaCell<double> cell(InitCtx{23, "gate_jacobian"}, cfg);
  cell.set_training(false);

  Rng rng(23);
  Tensor<double> x0 = rng.normal_tensor<double>({1, 2, 4, 4});
  int covered = 0;
  for (int oh = 0; oh < 4; ++oh) {
    for (int ow = 0; ow < 4; ++ow) {
      Var<double> x = Var<double>::leaf(x0, true);
      Var<double> y = cell.forward(x);
      Var<double> unit =
          sum_all(slice(slice(y, 3, ow, 1), 2, oh, 1));
      unit.backward();
      const Tensor<double>& g = x.grad_const();
      for (int ih = 0; ih < 4; ++ih) {
        for (int iw = 0; iw < 4; ++iw) {
          double mag = 0.0;
          for (int c = 0; c < 2; ++c)
            mag += std::abs(g.at({0, c, ih, iw}));
          if (mag > 0.0) ++covered;
        }
      }
    }
  }
  return {covered == 256, "nonzero output-input couplings on the 4x4 grid: " +
                              std::to_string(covered) + "/256"};
}

Outcome check_structural_ablations() {
  BackboneSpec full = make_spec("vgamba-b");
  int64_t base = 0, no_asc_count = 0, no_rpe_count = 0;
  {
    Backbone<float> m(full, 1);
    base = m.count_parameters();
  }
  {
    BackboneSpec s = full;
    s.use_asc = false;
    Backbone<float> m(s, 1);
    no_asc_count = m.count_parameters();
  }
  {
    BackboneSpec s = full;
    s.use_rpe = false;
    Backbone<float> m(s, 1);
    no_rpe_count = m.count_parameters();
  }
  const int64_t asc_delta = base - no_asc_count;
  const int64_t rpe_delta = base - no_rpe_count;
  const bool deltas_ok = asc_delta > 0 && asc_delta < 100000 && rpe_delta > 0 &&
                         rpe_delta < 100000 &&
                         within(static_cast<double>(no_asc_count), 18.8e6, 0.05);

  // The toggles must change the computation, not just the size.
  BackboneSpec tiny = make_spec("tiny");
  Backbone<double> with_asc(tiny, 2);
  BackboneSpec tiny_no_asc = tiny;
  tiny_no_asc.use_asc = false;
  Backbone<double> without_asc(tiny_no_asc, 2);
  with_asc.set_training(false);
  without_asc.set_training(false);
  Rng rng(2);
  Var<double> x = Var<double>::leaf(rng.normal_tensor<double>({1, 3, 64, 64}));
  const Tensor<double> ya = with_asc.forward(x).value();
  const Tensor<double> yb = without_asc.forward(x).value();
  double asc_effect = 0.0;
  for (int64_t i = 0; i < ya.numel(); ++i)
    asc_effect = std::max(asc_effect, std::abs(ya[i] - yb[i]));

  // Positions initialize to zero; give them visible values before comparing.
  const Tensor<double> y0 = with_asc.forward(x).value();
  for (auto& [name, p] : with_asc.named_parameters()) {
    if (name.find(".rpe.r_") != std::string::npos) p.value_mut().fill(0.3);
  }
  const Tensor<double> y1 = with_asc.forward(x).value();
  double rpe_effect = 0.0;
  for (int64_t i = 0; i < y0.numel(); ++i)
    rpe_effect = std::max(rpe_effect, std::abs(y0[i] - y1[i]));

  const bool ok = deltas_ok && asc_effect > 0.0 && rpe_effect > 0.0;
  std::string detail = "gate toggle removes " + std::to_string(asc_delta) +
                       " parameters (model lands at " + fmt(no_asc_count / 1e6) +
                       "M vs 18.8M +-5%), position toggle removes " + std::to_string(rpe_delta) +
                       "; output deltas " + fmt(asc_effect) + " / " + fmt(rpe_effect) +
                       ". Dataset-scale accuracy comparisons (classification, segmentation, "
                       "detection) are out of scope on this hardware; the toggles are verified "
                       "structurally instead.";
  return {ok, detail};
}

}  // namespace

int main() {
  std::cout << "acceptance gate: 9 criteria\n";
  criterion(1, "parameter budgets", check_parameter_budgets);
  criterion(2, "multiply counts", check_flop_counts);
  criterion(3, "scan correctness", check_scan_against_oracle);
  criterion(4, "gradient certification", check_gradients_battery);
  criterion(5, "runtime scaling", check_runtime_scaling);
  criterion(6, "long-range transport", check_transport_convergence);
  criterion(7, "receptive field spread", check_erf_globality);
  criterion(8, "dense spatial coupling", check_dense_jacobian);
  criterion(9, "structural ablations", check_structural_ablations);
  std::cout << (9 - g_failures) << " of 9 criteria passed\n";
  return g_failures;
}
