#include <doctest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "vgamba/analysis.hpp"
#include "vgamba/nn.hpp"

using namespace vgamba;
using test_util::max_abs_diff;

namespace {

ComplexityQuery q_attention(int64_t m, int64_t d) {
  ComplexityQuery q;
  q.kind = "attention";
  q.m = m;
  q.d = d;
  return q;
}

ComplexityQuery q_ssm(int64_t m, int64_t d, int64_t n) {
  ComplexityQuery q;
  q.kind = "ssm";
  q.m = m;
  q.d = d;
  q.n = n;
  return q;
}

ComplexityQuery q_cnn(int64_t m, int64_t d, int64_t k) {
  ComplexityQuery q;
  q.kind = "cnn";
  q.m = m;
  q.d = d;
  q.k = k;
  return q;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("closed-form cost model hand values") {
  CHECK(flops_analytic(q_attention(2, 1)) == 16);
  CHECK(flops_analytic(q_ssm(1, 1, 1)) == 8);
  CHECK(flops_analytic(q_cnn(1, 2, 3)) == 36);

  CHECK_THROWS_AS(flops_analytic(q_ssm(4, 4, 0)), ConfigError);
  CHECK_THROWS_AS(flops_analytic(q_cnn(4, 4, 0)), ConfigError);
  ComplexityQuery bad;
  bad.kind = "fft";
  bad.m = 1;
  bad.d = 1;
  CHECK_THROWS_AS(flops_analytic(bad), ConfigError);
}

TEST_CASE("scan cost is exactly linear in sequence length") {
  for (int64_t m : {16, 64, 1024}) {
    CHECK(flops_analytic(q_ssm(2 * m, 64, 16)) == 2 * flops_analytic(q_ssm(m, 64, 16)));
  }
}

TEST_CASE("attention to scan cost ratio grows with sequence length") {
  double prev = 0.0;
  for (int64_t m = 16; m <= 4096; m *= 2) {
    const double ratio = static_cast<double>(flops_analytic(q_attention(m, 64))) /
                         static_cast<double>(flops_analytic(q_ssm(m, 64, 16)));
    CHECK(ratio > prev);
    prev = ratio;
  }
}

TEST_CASE("counted convolution multiplies match the closed form") {
  Conv2d<double> conv(InitCtx{3, "probe"}, 4, 4, 3, 1, 1, false);
  Rng rng(3);
  Var<double> x = Var<double>::leaf(rng.normal_tensor<double>({1, 4, 8, 8}));
  FlopRecorder rec;
  {
    FlopCapture cap(rec);
    conv.forward(x);
  }
  // 64 positions, 3x3 kernel, 4 in, 4 out.
  CHECK(rec.total() == 64 * 9 * 16);
  CHECK(rec.total() == flops_analytic(q_cnn(64, 4, 3)));
}

TEST_CASE("per-module counts sum to the model total") {
  Backbone<float> model(make_spec("tiny"), 1);
  model.set_training(false);
  FlopRecorder rec = flops_empirical(model, {1, 3, 64, 64});
  CHECK(rec.total() > 0);
  int64_t sectioned = 0;
  for (const char* section : {"stem", "s1", "s2", "s3", "s4", "fc"}) {
    sectioned += rec.prefix_total(section);
  }
  CHECK(sectioned == rec.total());
  CHECK(rec.prefix_total("s4") > 0);
  CHECK(rec.prefix_total("nothing.by.this.name") == 0);
}

TEST_CASE("power-law fit recovers exact exponents") {
  std::vector<std::pair<int64_t, double>> lin, quad;
  for (int64_t m = 32; m <= 1024; m *= 2) {
    lin.emplace_back(m, 3.5e-6 * static_cast<double>(m));
    quad.emplace_back(m, 1e-9 * static_cast<double>(m) * static_cast<double>(m));
  }
  ScalingFit f1 = scaling_fit(lin);
  CHECK(std::abs(f1.exponent - 1.0) < 1e-9);
  CHECK(f1.r2 == doctest::Approx(1.0).epsilon(1e-12));
  ScalingFit f2 = scaling_fit(quad);
  CHECK(std::abs(f2.exponent - 2.0) < 1e-9);

  CHECK_THROWS_AS(scaling_fit({{16, 1.0}, {32, 2.0}, {64, 4.0}}), ConfigError);
  CHECK_THROWS_AS(scaling_fit({{16, 1.0}, {32, 0.0}, {64, 4.0}, {128, 8.0}}), NumericalError);
}

TEST_CASE("receptive field of the identity is one pixel") {
  auto probe = [](const Var<double>& x) { return x; };
  ErfMap map = erf_map_probe<double>(probe, 1, 9, 4, 11);
  REQUIRE(map.values.shape() == Shape{9, 9});
  for (int64_t i = 0; i < 9; ++i) {
    for (int64_t j = 0; j < 9; ++j) {
      if (i == 4 && j == 4) {
        CHECK(map.values.at({i, j}) == 1.0);
      } else {
        CHECK(map.values.at({i, j}) == 0.0);
      }
    }
  }
}

TEST_CASE("receptive field of a single convolution is its kernel footprint") {
  Conv2d<double> conv(InitCtx{7, "probe"}, 1, 1, 3, 1, 1, false);
  auto probe = [&](const Var<double>& x) { return conv.forward(x); };
  ErfMap map = erf_map_probe<double>(probe, 1, 9, 2, 13);
  double peak = 0.0;
  for (int64_t i = 0; i < 9; ++i) {
    for (int64_t j = 0; j < 9; ++j) {
      const double v = map.values.at({i, j});
      CHECK(v >= 0.0);
      peak = std::max(peak, v);
      const bool inside = (i >= 3 && i <= 5 && j >= 3 && j <= 5);
      if (inside) {
        CHECK(v > 0.0);
      } else {
        CHECK(v == 0.0);
      }
    }
  }
  CHECK(peak == 1.0);
}

TEST_CASE("area fraction thresholds") {
  ErfMap map;
  map.values = Tensor<double>({2, 2});
  map.values.at({0, 0}) = 1.0;
  map.values.at({0, 1}) = 0.06;
  map.values.at({1, 0}) = 0.04;
  map.values.at({1, 1}) = 0.2;
  CHECK(erf_area_fraction(map, 0.05) == doctest::Approx(0.75));
  CHECK(erf_area_fraction(map, 0.2) == doctest::Approx(0.5));
  CHECK(erf_area_fraction(map, 0.0) == doctest::Approx(1.0));
}

TEST_CASE("receptive field widens along the stage ladder") {
  BackboneSpec spec = make_spec("tiny");
  Backbone<double> gamba(spec, 1);
  BackboneSpec conv_spec = spec;
  conv_spec.mixer = MixerKind::conv;
  Backbone<double> conv(conv_spec, 1);

  const int extent = 64;
  const int samples = 8;
  std::vector<double> gamba_frac;
  std::vector<ErfMap> gamba_maps;
  for (int stage = 0; stage <= 4; ++stage) {
    gamba_maps.push_back(erf_map<double>(gamba, stage, extent, samples, 5));
    gamba_frac.push_back(erf_area_fraction(gamba_maps.back(), 0.05));
  }
  for (int stage = 1; stage <= 4; ++stage) {
    CAPTURE(stage);
    CHECK(gamba_frac[static_cast<size_t>(stage)] >=
          gamba_frac[static_cast<size_t>(stage) - 1]);
  }

  // Stages below the mixer swap share parameters with the conv baseline, so
  // their maps agree bit for bit; the swapped stage spreads wider.
  ErfMap conv_s3 = erf_map<double>(conv, 3, extent, samples, 5);
  CHECK(max_abs_diff(gamba_maps[3].values, conv_s3.values) == 0.0);
  ErfMap conv_s4 = erf_map<double>(conv, 4, extent, samples, 5);
  CHECK(erf_area_fraction(gamba_maps[4], 0.05) > erf_area_fraction(conv_s4, 0.05));
}

TEST_CASE("timing harness produces well-formed points") {
  std::vector<int64_t> ms = {8, 16, 32, 64};
  auto scan = bench_scan_scaling<float>(ms, 8, 4, 1e-5, 2);
  auto attn = bench_attention_scaling<float>(ms, 8, 2, 1e-5, 2);
  REQUIRE(scan.size() == 4);
  REQUIRE(attn.size() == 4);
  for (size_t i = 0; i < ms.size(); ++i) {
    CHECK(scan[i].m == ms[i]);
    CHECK(attn[i].m == ms[i]);
    CHECK(scan[i].seconds > 0.0);
    CHECK(attn[i].seconds > 0.0);
    CHECK(scan[i].reps >= 1);
    CHECK(attn[i].reps >= 1);
  }
}

TEST_CASE("gradient certification battery passes a quick round") {
  auto reports = gradcheck_battery(77, 1);
  CHECK(reports.size() >= 8);
  for (const auto& [name, report] : reports) {
    CAPTURE(name);
    CHECK(report.passed);
  }
}

}  // TEST_SUITE
