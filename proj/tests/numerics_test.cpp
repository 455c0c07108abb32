#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <set>

#include "test_util.hpp"
#include "vgamba/gradcheck.hpp"
#include "vgamba/io_util.hpp"
#include "vgamba/module.hpp"
#include "vgamba/ops.hpp"
#include "vgamba/parallel.hpp"
#include "vgamba/random.hpp"

using namespace vgamba;
using test_util::max_abs_diff;

namespace {

Tensor<double> t2x3(std::vector<double> v) { return Tensor<double>({2, 3}, std::move(v)); }

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("rng streams are reproducible and name-separated") {
  Rng a(42), b(42);
  for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c(derive_seed(1, "weights")), d(derive_seed(1, "data"));
  bool any_diff = false;
  for (int i = 0; i < 8; ++i) any_diff |= c.next_u64() != d.next_u64();
  CHECK(any_diff);
  CHECK(derive_seed(1, "weights") == derive_seed(1, "weights"));
  CHECK(derive_seed(1, "weights") != derive_seed(2, "weights"));

  Rng e(7), f(7);
  Tensor<double> te = e.normal_tensor<double>({3, 5});
  Tensor<double> tf = f.normal_tensor<double>({3, 5});
  CHECK(max_abs_diff(te, tf) == 0.0);
}

TEST_CASE("rng uniform_int covers an inclusive range") {
  Rng rng(3);
  std::set<int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    int64_t v = rng.uniform_int(0, 3);
    CHECK(v >= 0);
    CHECK(v <= 3);
    seen.insert(v);
  }
  CHECK(seen.size() == 4);
}

TEST_CASE("rng normal moments are sane") {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(var > 0.9);
  CHECK(var < 1.1);
}

TEST_CASE("broadcasting follows trailing alignment") {
  CHECK(broadcast_shape({2, 3}, {3}) == Shape{2, 3});
  CHECK(broadcast_shape({4, 1, 2}, {3, 1}) == Shape{4, 3, 2});
  CHECK_THROWS_AS(broadcast_shape({2, 3}, {4}), ShapeError);

  Var<double> a = Var<double>::leaf(t2x3({1, 2, 3, 4, 5, 6}));
  Var<double> b = Var<double>::leaf(Tensor<double>({3}, {10, 20, 30}));
  Tensor<double> want = t2x3({11, 22, 33, 14, 25, 36});
  CHECK(max_abs_diff(add(a, b).value(), want) == 0.0);

  Var<double> col = Var<double>::leaf(Tensor<double>({2, 1}, {2, 3}));
  Tensor<double> prod = mul(a, col).value();
  CHECK(max_abs_diff(prod, t2x3({2, 4, 6, 12, 15, 18})) == 0.0);
}

TEST_CASE("elementwise forward values") {
  Var<double> z = Var<double>::leaf(Tensor<double>({1}, {0.0}));
  CHECK(softplus(z).value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(sigmoid(z).value()[0] == doctest::Approx(0.5));
  CHECK(silu(z).value()[0] == doctest::Approx(0.0));
  Var<double> neg1 = Var<double>::leaf(Tensor<double>({1}, {-1.0}));
  CHECK(relu(neg1).value()[0] == 0.0);
  CHECK(vexp(z).value()[0] == doctest::Approx(1.0));
  Var<double> four = Var<double>::leaf(Tensor<double>({1}, {4.0}));
  CHECK(vsqrt(four).value()[0] == doctest::Approx(2.0));
}

TEST_CASE("zoh step-response factor and its small-argument limit") {
  auto phi_of = [](double a, double delta) {
    Var<double> A = Var<double>::leaf(Tensor<double>({1, 1}, {a}));
    Var<double> d = Var<double>::leaf(Tensor<double>({1, 1}, {delta}));
    return zoh_phi(A, d).value()[0];
  };
  // (exp(-ln 2) - 1) / (-1) = 1/2
  CHECK(phi_of(-1.0, std::log(2.0)) == doctest::Approx(0.5).epsilon(1e-12));
  // A = 0 takes the limit phi = delta exactly.
  CHECK(phi_of(0.0, 0.3) == doctest::Approx(0.3).epsilon(1e-15));
  // Values straddling the branch threshold |A*delta| = 1e-6 agree.
  const double below = phi_of(-1.0, 0.999e-6);
  const double above = phi_of(-1.0, 1.001e-6);
  CHECK(std::abs(below - 0.999e-6) < 1e-12);
  // phi/delta tends to 1 as A*delta -> 0; both branches sit within the
  // truncation error of the switch point.
  CHECK(std::abs(above / 1.001e-6 - below / 0.999e-6) < 1e-6);
}

TEST_CASE("shape ops produce the expected layouts") {
  Var<double> a = Var<double>::leaf(t2x3({1, 2, 3, 4, 5, 6}));

  Tensor<double> tr = permute(a, {1, 0}).value();
  CHECK(tr.shape() == Shape{3, 2});
  CHECK(tr.at({0, 1}) == 4.0);
  CHECK(tr.at({2, 0}) == 3.0);

  Tensor<double> rev = reverse_axis(a, 1).value();
  CHECK(max_abs_diff(rev, t2x3({3, 2, 1, 6, 5, 4})) == 0.0);

  Tensor<double> sl = slice(a, 1, 1, 2).value();
  CHECK(sl.shape() == Shape{2, 2});
  CHECK(sl.at({1, 0}) == 5.0);

  CHECK(reshape(a, {3, 2}).value().at({2, 1}) == 6.0);
  CHECK_THROWS_AS(reshape(a, {4, 2}), ShapeError);
}

TEST_CASE("reductions with and without kept axes") {
  Var<double> a = Var<double>::leaf(t2x3({1, 2, 3, 4, 5, 6}));
  CHECK(sum_all(a).value()[0] == 21.0);

  Tensor<double> s0 = reduce_sum(a, {0}, true).value();
  CHECK(s0.shape() == Shape{1, 3});
  CHECK(s0[1] == 7.0);

  Tensor<double> m1 = reduce_mean(a, {1}, false).value();
  CHECK(m1.shape() == Shape{2});
  CHECK(m1[0] == doctest::Approx(2.0));
  CHECK(m1[1] == doctest::Approx(5.0));
}

TEST_CASE("matmul broadcasts leading axes; linear applies bias") {
  Var<double> a = Var<double>::leaf(Tensor<double>({2, 2, 3}, {1, 0, 2, 0, 1, 1, 1, 1, 0, 2, 0, 1}));
  Var<double> b = Var<double>::leaf(Tensor<double>({3, 2}, {1, 2, 3, 4, 5, 6}));
  Tensor<double> y = matmul(a, b).value();
  CHECK(y.shape() == Shape{2, 2, 2});
  CHECK(y.at({0, 0, 0}) == 11.0);  // 1*1 + 0*3 + 2*5
  CHECK(y.at({0, 0, 1}) == 14.0);
  CHECK(y.at({1, 1, 0}) == 7.0);  // 2*1 + 0*3 + 1*5

  Var<double> x = Var<double>::leaf(Tensor<double>({2, 3}, {1, 1, 1, 0, 1, 0}));
  Var<double> bias = Var<double>::leaf(Tensor<double>({2}, {10, 20}));
  Tensor<double> ly = linear(x, b, std::optional<Var<double>>(bias)).value();
  CHECK(ly.at({0, 0}) == 19.0);  // 1+3+5 + 10
  CHECK(ly.at({1, 1}) == 24.0);  // 4 + 20
}

TEST_CASE("conv2d counts its receptive window") {
  Var<double> x = Var<double>::leaf(Tensor<double>::ones({1, 1, 3, 3}));
  Var<double> w = Var<double>::leaf(Tensor<double>::ones({1, 1, 3, 3}));
  Tensor<double> y = conv2d<double>(x, w, std::nullopt, 1, 1).value();
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y.at({0, 0, 1, 1}) == 9.0);
  CHECK(y.at({0, 0, 0, 0}) == 4.0);
  CHECK(y.at({0, 0, 0, 1}) == 6.0);

  Tensor<double> strided = conv2d<double>(x, w, std::nullopt, 2, 1).value();
  CHECK(strided.shape() == Shape{1, 1, 2, 2});
}

TEST_CASE("depthwise conv1d is centered") {
  // One channel, taps [w_-1, w_0, w_+1].
  Var<double> x = Var<double>::leaf(Tensor<double>({1, 4, 1}, {1, 2, 3, 4}));
  Var<double> b = Var<double>::leaf(Tensor<double>::zeros({1}));

  Var<double> id = Var<double>::leaf(Tensor<double>({1, 3}, {0, 1, 0}));
  CHECK(max_abs_diff(depthwise_conv1d(x, id, b).value(), x.value()) == 0.0);

  Var<double> left = Var<double>::leaf(Tensor<double>({1, 3}, {1, 0, 0}));
  Tensor<double> shifted = depthwise_conv1d(x, left, b).value();
  // Output m picks up x[m-1]; position 0 reads the zero pad.
  CHECK(max_abs_diff(shifted, Tensor<double>({1, 4, 1}, {0, 1, 2, 3})) == 0.0);
}

TEST_CASE("pooling, upsampling, and linear resampling") {
  Var<double> x = Var<double>::leaf(
      Tensor<double>({1, 1, 4, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16}));
  Tensor<double> mx = maxpool2d(x, 2, 2, 0).value();
  CHECK(mx.shape() == Shape{1, 1, 2, 2});
  CHECK(max_abs_diff(mx, Tensor<double>({1, 1, 2, 2}, {6, 8, 14, 16})) == 0.0);

  Tensor<double> av = avgpool2d(x, 2, 2).value();
  CHECK(max_abs_diff(av, Tensor<double>({1, 1, 2, 2}, {3.5, 5.5, 11.5, 13.5})) == 0.0);

  Var<double> small = Var<double>::leaf(Tensor<double>({1, 1, 1, 2}, {1, 2}));
  Tensor<double> up = upsample_nearest2x(small).value();
  CHECK(up.shape() == Shape{1, 1, 2, 4});
  CHECK(max_abs_diff(up, Tensor<double>({1, 1, 2, 4}, {1, 1, 2, 2, 1, 1, 2, 2})) == 0.0);

  Var<double> line = Var<double>::leaf(Tensor<double>({1, 2}, {10, 20}));
  Tensor<double> rs = resize_linear_lastdim(line, 4).value();
  CHECK(rs.shape() == Shape{1, 4});
  CHECK(rs[0] == doctest::Approx(10.0));
  CHECK(rs[1] == doctest::Approx(10.0 + 10.0 / 3.0));
  CHECK(rs[3] == doctest::Approx(20.0));
}

TEST_CASE("gradients: smooth elementwise chain across 20 seeds") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    Rng rng(derive_seed(seed, "elementwise"));
    Tensor<double> x = rng.normal_tensor<double>({2, 3});
    Tensor<double> wts = rng.normal_tensor<double>({2, 3});
    auto f = [&](const Var<double>& v) {
      Var<double> w = Var<double>::leaf(wts);
      Var<double> a = add(silu(v), mul(softplus(v), sigmoid(v)));
      Var<double> b = vexp(mul_scalar(v, 0.3));
      Var<double> c = vsqrt(add_scalar(mul(v, v), 1.0));
      Var<double> d = divide(a, add_scalar(b, 2.0));
      return sum_all(mul(add(add(d, c), neg(v)), w));
    };
    GradReport<double> rep = check_gradients<double>(f, x, 1e-5, 1e-4);
    CHECK_MESSAGE(rep.passed, "max rel err " << rep.max_rel_error);
  }
}

TEST_CASE("gradients: piecewise ops away from their kinks") {
  Rng rng(901);
  Tensor<double> x({2, 4});
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double mag = rng.uniform(0.2, 1.2);
    x[i] = (rng.next_u64() & 1) ? mag : -mag;
  }
  Tensor<double> wts = rng.normal_tensor<double>({2, 4});
  auto f = [&](const Var<double>& v) {
    return sum_all(mul(relu(v), Var<double>::leaf(wts)));
  };
  GradReport<double> rep = check_gradients<double>(f, x, 1e-5, 1e-4);
  CHECK_MESSAGE(rep.passed, "max rel err " << rep.max_rel_error);

  // Max pooling: windows of distinct normals, argmax stable under the probe.
  Tensor<double> img = rng.normal_tensor<double>({1, 2, 4, 4});
  Tensor<double> w2 = rng.normal_tensor<double>({1, 2, 2, 2});
  auto g = [&](const Var<double>& v) {
    return sum_all(mul(maxpool2d(v, 2, 2, 0), Var<double>::leaf(w2)));
  };
  GradReport<double> rep2 = check_gradients<double>(g, img, 1e-6, 1e-4);
  CHECK_MESSAGE(rep2.passed, "max rel err " << rep2.max_rel_error);
}

TEST_CASE("gradients: spatial, linear-algebra, and norm ops across 20 seeds") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    Rng rng(derive_seed(seed, "spatial"));
    Tensor<double> x = rng.normal_tensor<double>({2, 3, 4, 4});
    Tensor<double> conv_w = rng.normal_tensor<double>({2, 3, 3, 3}, 0.0, 0.4);
    Tensor<double> conv_b = rng.normal_tensor<double>({2});
    Tensor<double> mat = rng.normal_tensor<double>({16, 5}, 0.0, 0.4);
    Tensor<double> gamma = rng.uniform_tensor<double>({3}, 0.5, 1.5);
    Tensor<double> beta = rng.normal_tensor<double>({3}, 0.0, 0.2);
    Tensor<double> dw_w = rng.normal_tensor<double>({3, 3});
    Tensor<double> dw_b = rng.normal_tensor<double>({3});

    // The difference quotients re-evaluate the function, so the weighting
    // tensors are drawn once on the first pass and replayed afterwards.
    Rng wr(derive_seed(seed, "spatial_weights"));
    std::vector<Tensor<double>> weight_pool;
    size_t weight_at = 0;
    auto weigh = [&](const Var<double>& y) {
      if (weight_at == weight_pool.size())
        weight_pool.push_back(wr.normal_tensor<double>(y.shape()));
      return sum_all(mul(y, Var<double>::leaf(weight_pool[weight_at++])));
    };

    auto f = [&](const Var<double>& v) {
      weight_at = 0;
      Var<double> c = conv2d(v, Var<double>::leaf(conv_w),
                             std::optional<Var<double>>(Var<double>::leaf(conv_b)), 2, 1);
      Var<double> gn = groupnorm(v, Var<double>::leaf(gamma), Var<double>::leaf(beta), 3, 1e-5);
      Var<double> flat = reshape(v, {2, 3, 16});
      Var<double> mm = softmax_lastdim(matmul(flat, Var<double>::leaf(mat)));
      Var<double> seq = permute(flat, {0, 2, 1});  // [2, 16, 3]
      Var<double> dw = depthwise_conv1d(seq, Var<double>::leaf(dw_w), Var<double>::leaf(dw_b));
      Var<double> pooled = avgpool2d(v, 2, 2);
      Var<double> up = upsample_nearest2x(pooled);
      Var<double> rs = resize_linear_lastdim(v, 7);
      Var<double> sl = slice(reverse_axis(v, 3), 2, 1, 2);
      Var<double> red = reduce_mean(mul(v, v), {1, 2}, true);
      return weigh(c) + weigh(gn) + weigh(mm) + weigh(dw) + weigh(up) + weigh(rs) + weigh(sl) +
             weigh(red);
    };
    GradReport<double> rep = check_gradients<double>(f, x, 1e-5, 1e-4);
    CHECK_MESSAGE(rep.passed, "max rel err " << rep.max_rel_error);
  }
}

TEST_CASE("gradients: batch norm in training mode, input and affine sides") {
  Rng rng(77);
  Tensor<double> x = rng.normal_tensor<double>({3, 2, 3, 3});
  Tensor<double> gamma = rng.uniform_tensor<double>({2}, 0.5, 1.5);
  Tensor<double> beta = rng.normal_tensor<double>({2});
  Tensor<double> wts = rng.normal_tensor<double>({3, 2, 3, 3});

  auto run = [&](const Var<double>& xv, const Var<double>& g, const Var<double>& b) {
    Tensor<double> rm = Tensor<double>::zeros({2});
    Tensor<double> rv = Tensor<double>::ones({2});
    Var<double> y = batchnorm2d(xv, g, b, rm, rv, true, 0.1, 1e-5);
    return sum_all(mul(y, Var<double>::leaf(wts)));
  };

  GradReport<double> on_x = check_gradients<double>(
      [&](const Var<double>& v) {
        return run(v, Var<double>::leaf(gamma), Var<double>::leaf(beta));
      },
      x, 1e-5, 1e-4);
  CHECK_MESSAGE(on_x.passed, "max rel err " << on_x.max_rel_error);

  GradReport<double> on_gamma = check_gradients<double>(
      [&](const Var<double>& g) { return run(Var<double>::leaf(x), g, Var<double>::leaf(beta)); },
      gamma, 1e-5, 1e-4);
  CHECK_MESSAGE(on_gamma.passed, "max rel err " << on_gamma.max_rel_error);
}

TEST_CASE("backward accumulates across reuse and respects no-grad mode") {
  Var<double> x = Var<double>::leaf(Tensor<double>({2}, {3, 4}), true);
  Var<double> y = add(mul(x, x), x);  // d/dx = 2x + 1
  sum_all(y).backward();
  CHECK(x.grad_const()[0] == doctest::Approx(7.0));
  CHECK(x.grad_const()[1] == doctest::Approx(9.0));

  {
    NoGradGuard ng;
    Var<double> z = mul(x, x);
    CHECK_FALSE(z.requires_grad());
  }
  Var<double> z2 = mul(x, x);
  CHECK(z2.requires_grad());
}

TEST_CASE("finite difference helper matches an analytic derivative") {
  Tensor<double> x({3}, {0.5, -1.0, 2.0});
  auto f = [](const Tensor<double>& t) {
    double s = 0.0;
    for (int64_t i = 0; i < t.numel(); ++i) s += std::sin(t[i]);
    return s;
  };
  Tensor<double> g = finite_difference_gradient<double>(f, x, 1e-6);
  for (int64_t i = 0; i < 3; ++i) CHECK(g[i] == doctest::Approx(std::cos(x[i])).epsilon(1e-6));
}

TEST_CASE("nan probe records the first offending scope only") {
  NanProbe::disable();
  Tensor<double> bad({2}, {1.0, std::numeric_limits<double>::infinity()});
  Tensor<double> good = Tensor<double>::ones({2});
  NanProbe::report("quiet", bad);
  CHECK(NanProbe::first_offender().empty());

  NanProbe::enable();
  NanProbe::report("fine", good);
  CHECK(NanProbe::first_offender().empty());
  NanProbe::report("first_bad", bad);
  NanProbe::report("second_bad", bad);
  CHECK(NanProbe::first_offender() == "first_bad");
  NanProbe::disable();
}

TEST_CASE("parallel_for covers every index exactly once") {
  const int64_t n = 1000;
  std::vector<int> hits(n, 0);
  parallel_for(n, [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) hits[static_cast<size_t>(i)] += 1;
  });
  for (int64_t i = 0; i < n; ++i) CHECK(hits[static_cast<size_t>(i)] == 1);

  set_thread_cap(1);
  CHECK(max_threads() == 1);
  set_thread_cap(0);
  CHECK(max_threads() >= 1);
}

}  // TEST_SUITE
