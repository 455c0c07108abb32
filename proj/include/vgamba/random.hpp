#pragma once

#include <cstdint>
#include <string_view>

#include "vgamba/tensor.hpp"

namespace vgamba {

// xoshiro256++ seeded through splitmix64. Implemented here (not <random>) so
// streams are identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  // [0,1), 53-bit mantissa.
  double uniform();
  double uniform(double lo, double hi);

  // Box-Muller; second value of each pair is cached, so draws are a pure
  // function of call order.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Inclusive range, unbiased within 2^-64 via 128-bit multiply scaling.
  int64_t uniform_int(int64_t lo, int64_t hi);

  template <typename T>
  Tensor<T> normal_tensor(Shape shape, double mean = 0.0, double stddev = 1.0) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(normal(mean, stddev));
    return t;
  }

  template <typename T>
  Tensor<T> uniform_tensor(Shape shape, double lo, double hi) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(uniform(lo, hi));
    return t;
  }

 private:
  uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// Stable per-module seed: splitmix64 over (root ^ FNV-1a(name)). Same name and
// root give the same stream everywhere, so modules shared between model
// variants initialize identically.
uint64_t derive_seed(uint64_t root, std::string_view name);

}  // namespace vgamba
