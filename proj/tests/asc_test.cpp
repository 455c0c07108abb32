#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "vgamba/asc.hpp"

using namespace vgamba;
using test_util::max_abs;
using test_util::max_abs_diff;

namespace {

// Fill a named parameter of a module with one value.
template <typename M>
void fill_param(M& module, const std::string& name, double v) {
  bool found = false;
  for (auto& [n, p] : module.named_parameters())
    if (n == name) {
      Var<double> handle = p;
      handle.value_mut().fill(v);
      found = true;
    }
  REQUIRE_MESSAGE(found, "no parameter named " << name);
}

}  // namespace

TEST_SUITE("asc") {

TEST_CASE("coordinate pooling takes axis means") {
  Var<double> x = Var<double>::leaf(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
  auto [xh, xw] = coordinate_pool(x);
  CHECK(xh.shape() == Shape{1, 1, 2, 1});
  CHECK(max_abs_diff(xh.value(), Tensor<double>({1, 1, 2, 1}, {1.5, 3.5})) == 0.0);
  CHECK(xw.shape() == Shape{1, 1, 1, 2});
  CHECK(max_abs_diff(xw.value(), Tensor<double>({1, 1, 1, 2}, {2.0, 3.0})) == 0.0);

  Var<double> c = Var<double>::leaf(Tensor<double>({2, 3, 4, 5}, 2.5));
  auto [ch, cw] = coordinate_pool(c);
  CHECK(max_abs(ch.value()) == 2.5);
  CHECK(max_abs_diff(cw.value(), Tensor<double>({2, 3, 1, 5}, 2.5)) == 0.0);

  CHECK_THROWS_AS(coordinate_pool(Var<double>::leaf(Tensor<double>::ones({2, 3, 4}))), ShapeError);
}

TEST_CASE("reduction width has a floor of eight") {
  InitCtx ctx{1, "asc_width"};
  CHECK(Asc<double>(ctx.child("a"), 4, 32).mid_width() == 8);
  CHECK(Asc<double>(ctx.child("b"), 512, 32).mid_width() == 16);
  CHECK(Asc<double>(ctx.child("c"), 64, 8).mid_width() == 8);
  CHECK(Asc<double>(ctx.child("d"), 256, 2).mid_width() == 128);
}

TEST_CASE("gate never amplifies and saturates with extreme biases") {
  Asc<double> gate(InitCtx{7, "asc_sat"}, 4);
  Rng rng(7);
  Var<double> x = Var<double>::leaf(rng.normal_tensor<double>({2, 4, 5, 6}));

  Tensor<double> y = gate.forward(x).value();
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(std::abs(y[i]) <= std::abs(x.value()[i]));

  fill_param(gate, "b_h", 30.0);
  fill_param(gate, "b_w", 30.0);
  CHECK(max_abs_diff(gate.forward(x).value(), x.value()) < 1e-9);

  fill_param(gate, "b_h", -30.0);
  fill_param(gate, "b_w", -30.0);
  CHECK(max_abs(gate.forward(x).value()) < 1e-9);
}

TEST_CASE("axis blend collapses to the height descriptor at extreme alpha") {
  Asc<double> gate(InitCtx{9, "asc_alpha"}, 3);
  Rng rng(9);
  Tensor<double> x0 = rng.normal_tensor<double>({1, 3, 4, 4});

  // A perturbation with zero row means but nonzero column means: only the
  // width-axis descriptor can see it.
  Tensor<double> x1 = x0;
  x1.at({0, 1, 0, 0}) += 1.0;
  x1.at({0, 1, 0, 1}) -= 1.0;

  fill_param(gate, "alpha_raw", 30.0);  // alpha ~ 1: height axis only
  Tensor<double> yh0 = gate.forward(Var<double>::leaf(x0)).value();
  Tensor<double> yh1 = gate.forward(Var<double>::leaf(x1)).value();
  // Rows 1..3 are untouched inputs with an (almost) unchanged gate.
  double off_row = 0.0;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t h = 1; h < 4; ++h)
      for (int64_t w = 0; w < 4; ++w)
        off_row = std::max(off_row, std::abs(yh1.at({0, c, h, w}) - yh0.at({0, c, h, w})));
  CHECK(off_row < 1e-9);

  fill_param(gate, "alpha_raw", 0.0);  // balanced blend: width axis active
  Tensor<double> yb0 = gate.forward(Var<double>::leaf(x0)).value();
  Tensor<double> yb1 = gate.forward(Var<double>::leaf(x1)).value();
  double off_row_balanced = 0.0;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t h = 1; h < 4; ++h)
      for (int64_t w = 0; w < 4; ++w)
        off_row_balanced =
            std::max(off_row_balanced, std::abs(yb1.at({0, c, h, w}) - yb0.at({0, c, h, w})));
  CHECK(off_row_balanced > 1e-8);
}

TEST_CASE("height and width axes are distinct paths") {
  Asc<double> gate(InitCtx{15, "asc_axes"}, 3);
  Rng rng(15);
  Tensor<double> x = rng.normal_tensor<double>({1, 3, 4, 4});
  Tensor<double> xt(Shape{1, 3, 4, 4});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t h = 0; h < 4; ++h)
      for (int64_t w = 0; w < 4; ++w) xt.at({0, c, h, w}) = x.at({0, c, w, h});

  Tensor<double> y = gate.forward(Var<double>::leaf(x)).value();
  Tensor<double> yt = gate.forward(Var<double>::leaf(xt)).value();
  // Transposing the input does not transpose the output: the two axis
  // expansions carry different weights.
  double diff = 0.0;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t h = 0; h < 4; ++h)
      for (int64_t w = 0; w < 4; ++w)
        diff = std::max(diff, std::abs(yt.at({0, c, h, w}) - y.at({0, c, w, h})));
  CHECK(diff > 1e-6);
}

TEST_CASE("spatial permutations commute with the gate") {
  // Row means permute with rows and column means are row-order invariant, so
  // permuting rows of the input permutes rows of the output.
  Asc<double> gate(InitCtx{21, "asc_perm"}, 2);
  Rng rng(21);
  Tensor<double> x = rng.normal_tensor<double>({1, 2, 4, 3});
  const int64_t perm[4] = {2, 0, 3, 1};
  Tensor<double> xp(Shape{1, 2, 4, 3});
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t h = 0; h < 4; ++h)
      for (int64_t w = 0; w < 3; ++w) xp.at({0, c, h, w}) = x.at({0, c, perm[h], w});

  Tensor<double> y = gate.forward(Var<double>::leaf(x)).value();
  Tensor<double> yp = gate.forward(Var<double>::leaf(xp)).value();
  double diff = 0.0;
  for (int64_t c = 0; c < 2; ++c)
    for (int64_t h = 0; h < 4; ++h)
      for (int64_t w = 0; w < 3; ++w)
        diff = std::max(diff, std::abs(yp.at({0, c, h, w}) - y.at({0, c, perm[h], w})));
  CHECK(diff < 1e-12);
}

TEST_CASE("gate parameters receive gradients") {
  Asc<double> gate(InitCtx{27, "asc_grad"}, 4);
  Rng rng(27);
  Var<double> x = Var<double>::leaf(rng.normal_tensor<double>({2, 4, 3, 3}));
  gate.zero_grad();
  Rng wr(28);
  Var<double> w = Var<double>::leaf(wr.normal_tensor<double>({2, 4, 3, 3}));
  sum_all(mul(gate.forward(x), w)).backward();
  for (auto& [name, p] : gate.named_parameters()) {
    CAPTURE(name);
    REQUIRE(p.has_grad());
    CHECK(max_abs(p.grad_const()) > 0.0);
  }

  CHECK_THROWS_AS(gate.forward(Var<double>::leaf(Tensor<double>::ones({1, 3, 2, 2}))), ShapeError);
}

}  // TEST_SUITE
