#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vgamba/backbone.hpp"
#include "vgamba/flops.hpp"
#include "vgamba/gradcheck.hpp"

namespace vgamba {

// One mixer's cost model over a token sequence: attention needs (M, D); the
// scan additionally needs the state size N; a convolution needs the kernel K.
struct ComplexityQuery {
  std::string kind;  // "attention" | "ssm" | "cnn"
  int64_t m = 0;
  int64_t d = 0;
  int64_t n = 0;
  int64_t k = 0;
};

// attention: 4*M*D^2 + 2*M^2*D.  ssm: 4*M*(2D)*N (three scan products plus
// the output read, at the conventional inner width 2D).  cnn: M*K^2*D^2.
int64_t flops_analytic(const ComplexityQuery& q);

// MAC count of one forward pass at the given input shape, with the per-module
// breakdown in the recorder. Counts multiplies in convolutions, projections
// and scans; normalization/activation arithmetic is excluded by convention
// (see flops.hpp). Double the total for the multiply+add convention.
template <typename T>
FlopRecorder flops_empirical(Backbone<T>& model, const Shape& input_shape);

struct ScalingFit {
  double exponent = 0.0;
  double r2 = 0.0;
};

// Least squares of log(seconds) against log(M).
ScalingFit scaling_fit(const std::vector<std::pair<int64_t, double>>& timings);

// |d output_center / d input|, channel-aggregated, averaged over random
// inputs, scaled so the peak is 1.
struct ErfMap {
  Tensor<double> values;  // [H, W]
};

// Probe form: `probe` maps a [1, channels, E, E] input to any output whose
// last two axes are spatial; the map is taken at that output's center unit.
template <typename T>
ErfMap erf_map_probe(const std::function<Var<T>(const Var<T>&)>& probe, int channels,
                     int input_extent, int n_samples, uint64_t seed);

template <typename T>
ErfMap erf_map(Backbone<T>& model, int stage, int input_extent, int n_samples, uint64_t seed);

// Fraction of cells at or above threshold * max.
double erf_area_fraction(const ErfMap& map, double threshold);

struct BenchPoint {
  int64_t m = 0;
  double seconds = 0.0;
  int reps = 0;
};

// Timed forward passes over a list of sequence lengths, single execution
// stream. Repetitions grow until each point spends at least min_seconds.
template <typename T>
std::vector<BenchPoint> bench_scan_scaling(const std::vector<int64_t>& ms, int inner_width,
                                           int state_size, double min_seconds, uint64_t seed);
template <typename T>
std::vector<BenchPoint> bench_attention_scaling(const std::vector<int64_t>& ms, int channels,
                                                int heads, double min_seconds, uint64_t seed);

// Named double-precision gradient certifications over the library's exported
// operations and blocks, `rounds` random seeds each.
std::vector<std::pair<std::string, GradReport<double>>> gradcheck_battery(uint64_t seed, int rounds);

extern template FlopRecorder flops_empirical(Backbone<float>&, const Shape&);
extern template FlopRecorder flops_empirical(Backbone<double>&, const Shape&);
extern template ErfMap erf_map_probe(const std::function<Var<float>(const Var<float>&)>&, int, int,
                                     int, uint64_t);
extern template ErfMap erf_map_probe(const std::function<Var<double>(const Var<double>&)>&, int,
                                     int, int, uint64_t);
extern template ErfMap erf_map(Backbone<float>&, int, int, int, uint64_t);
extern template ErfMap erf_map(Backbone<double>&, int, int, int, uint64_t);

}  // namespace vgamba
