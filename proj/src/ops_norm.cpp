#include <cmath>
#include <vector>

#include "vgamba/ops.hpp"

namespace vgamba {

template <typename T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                   Tensor<T>& running_var, bool training, T momentum, T eps) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("batchnorm2d expects [B,C,H,W]");
  const int64_t B = xs[0], C = xs[1], HW = xs[2] * xs[3];
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C} || running_mean.shape() != Shape{C} ||
      running_var.shape() != Shape{C})
    throw ShapeError("batchnorm2d parameter shapes must be [C] with C=" + std::to_string(C));
  const int64_t K = B * HW;

  std::vector<T> mean(static_cast<size_t>(C)), invstd(static_cast<size_t>(C));
  const T* px = x.value().data();
  if (training) {
    for (int64_t c = 0; c < C; ++c) {
      double m = 0;
      for (int64_t n = 0; n < B; ++n) {
        const T* p = px + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) m += static_cast<double>(p[i]);
      }
      m /= static_cast<double>(K);
      double v = 0;
      for (int64_t n = 0; n < B; ++n) {
        const T* p = px + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          const double d = static_cast<double>(p[i]) - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(K);
      mean[static_cast<size_t>(c)] = static_cast<T>(m);
      invstd[static_cast<size_t>(c)] = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
      const double unbiased = K > 1 ? v * K / static_cast<double>(K - 1) : v;
      running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * static_cast<T>(m);
      running_var[c] = (T(1) - momentum) * running_var[c] + momentum * static_cast<T>(unbiased);
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      mean[static_cast<size_t>(c)] = running_mean[c];
      invstd[static_cast<size_t>(c)] = T(1) / std::sqrt(running_var[c] + eps);
    }
  }

  Tensor<T> out(xs);
  const T* pg = gamma.value().data();
  const T* pb = beta.value().data();
  T* po = out.data();
  for (int64_t n = 0; n < B; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const T* ip = px + (n * C + c) * HW;
      T* op = po + (n * C + c) * HW;
      const T m = mean[static_cast<size_t>(c)], is = invstd[static_cast<size_t>(c)];
      const T g = pg[c], bb = pb[c];
      for (int64_t i = 0; i < HW; ++i) op[i] = g * (ip[i] - m) * is + bb;
    }

  return Var<T>::op(
      std::move(out), {x, gamma, beta}, [B, C, HW, K, mean, invstd, training](detail::Node<T>& n) {
        auto& xv = n.parents[0];
        auto& gv = n.parents[1];
        auto& bv = n.parents[2];
        const T* px = xv.value().data();
        const T* pdy = n.grad.data();
        const T* pg = gv.value().data();

        std::vector<T> sum_dy(static_cast<size_t>(C), T(0)), sum_dy_xhat(static_cast<size_t>(C), T(0));
        for (int64_t nn = 0; nn < B; ++nn)
          for (int64_t c = 0; c < C; ++c) {
            const T* ip = px + (nn * C + c) * HW;
            const T* dp = pdy + (nn * C + c) * HW;
            const T m = mean[static_cast<size_t>(c)], is = invstd[static_cast<size_t>(c)];
            T s0 = T(0), s1 = T(0);
            for (int64_t i = 0; i < HW; ++i) {
              s0 += dp[i];
              s1 += dp[i] * (ip[i] - m) * is;
            }
            sum_dy[static_cast<size_t>(c)] += s0;
            sum_dy_xhat[static_cast<size_t>(c)] += s1;
          }

        if (xv.requires_grad()) {
          Tensor<T> gx(xv.shape());
          T* pgx = gx.data();
          for (int64_t nn = 0; nn < B; ++nn)
            for (int64_t c = 0; c < C; ++c) {
              const T* ip = px + (nn * C + c) * HW;
              const T* dp = pdy + (nn * C + c) * HW;
              T* xp = pgx + (nn * C + c) * HW;
              const T m = mean[static_cast<size_t>(c)], is = invstd[static_cast<size_t>(c)];
              const T g = pg[c];
              if (training) {
                const T kinv = T(1) / static_cast<T>(K);
                const T sd = sum_dy[static_cast<size_t>(c)], sx = sum_dy_xhat[static_cast<size_t>(c)];
                for (int64_t i = 0; i < HW; ++i) {
                  const T xhat = (ip[i] - m) * is;
                  xp[i] = g * is * (dp[i] - kinv * sd - xhat * kinv * sx);
                }
              } else {
                for (int64_t i = 0; i < HW; ++i) xp[i] = g * is * dp[i];
              }
            }
          xv.accumulate(gx);
        }
        if (gv.requires_grad()) {
          Tensor<T> gg({C});
          for (int64_t c = 0; c < C; ++c) gg[c] = sum_dy_xhat[static_cast<size_t>(c)];
          gv.accumulate(gg);
        }
        if (bv.requires_grad()) {
          Tensor<T> gb({C});
          for (int64_t c = 0; c < C; ++c) gb[c] = sum_dy[static_cast<size_t>(c)];
          bv.accumulate(gb);
        }
      });
}

template <typename T>
Var<T> groupnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups, T eps) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("groupnorm expects [B,C,H,W]");
  const int64_t B = xs[0], C = xs[1], HW = xs[2] * xs[3];
  if (groups < 1 || C % groups != 0)
    throw ShapeError("groupnorm: groups=" + std::to_string(groups) + " must divide C=" + std::to_string(C));
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C})
    throw ShapeError("groupnorm parameter shapes must be [C]");
  const int64_t CG = C / groups, K = CG * HW;

  std::vector<T> mean(static_cast<size_t>(B * groups)), invstd(static_cast<size_t>(B * groups));
  const T* px = x.value().data();
  for (int64_t n = 0; n < B; ++n)
    for (int64_t g = 0; g < groups; ++g) {
      double m = 0;
      const T* base = px + (n * C + g * CG) * HW;
      for (int64_t i = 0; i < K; ++i) m += static_cast<double>(base[i]);
      m /= static_cast<double>(K);
      double v = 0;
      for (int64_t i = 0; i < K; ++i) {
        const double d = static_cast<double>(base[i]) - m;
        v += d * d;
      }
      v /= static_cast<double>(K);
      mean[static_cast<size_t>(n * groups + g)] = static_cast<T>(m);
      invstd[static_cast<size_t>(n * groups + g)] =
          static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
    }

  Tensor<T> out(xs);
  const T* pga = gamma.value().data();
  const T* pbe = beta.value().data();
  T* po = out.data();
  for (int64_t n = 0; n < B; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const int64_t g = c / CG;
      const T m = mean[static_cast<size_t>(n * groups + g)];
      const T is = invstd[static_cast<size_t>(n * groups + g)];
      const T* ip = px + (n * C + c) * HW;
      T* op = po + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) op[i] = pga[c] * (ip[i] - m) * is + pbe[c];
    }

  const int64_t G = groups;
  return Var<T>::op(std::move(out), {x, gamma, beta}, [B, C, HW, CG, G, K, mean, invstd](detail::Node<T>& n) {
    auto& xv = n.parents[0];
    auto& gv = n.parents[1];
    auto& bv = n.parents[2];
    const T* px = xv.value().data();
    const T* pdy = n.grad.data();
    const T* pga = gv.value().data();

    if (xv.requires_grad()) {
      Tensor<T> gx(xv.shape());
      T* pgx = gx.data();
      for (int64_t nn = 0; nn < B; ++nn)
        for (int64_t g = 0; g < G; ++g) {
          const T m = mean[static_cast<size_t>(nn * G + g)];
          const T is = invstd[static_cast<size_t>(nn * G + g)];
          // dxhat = dy * gamma; two reductions over the group, then the
          // standard normalization backward.
          T sd = T(0), sx = T(0);
          for (int64_t cc = 0; cc < CG; ++cc) {
            const int64_t c = g * CG + cc;
            const T* ip = px + (nn * C + c) * HW;
            const T* dp = pdy + (nn * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
              const T dxh = dp[i] * pga[c];
              sd += dxh;
              sx += dxh * (ip[i] - m) * is;
            }
          }
          const T kinv = T(1) / static_cast<T>(K);
          for (int64_t cc = 0; cc < CG; ++cc) {
            const int64_t c = g * CG + cc;
            const T* ip = px + (nn * C + c) * HW;
            const T* dp = pdy + (nn * C + c) * HW;
            T* xp = pgx + (nn * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
              const T xhat = (ip[i] - m) * is;
              const T dxh = dp[i] * pga[c];
              xp[i] = is * (dxh - kinv * sd - xhat * kinv * sx);
            }
          }
        }
      xv.accumulate(gx);
    }
    if (gv.requires_grad() || bv.requires_grad()) {
      Tensor<T> gg({C}), gb({C});
      for (int64_t nn = 0; nn < B; ++nn)
        for (int64_t c = 0; c < C; ++c) {
          const int64_t g = c / CG;
          const T m = mean[static_cast<size_t>(nn * G + g)];
          const T is = invstd[static_cast<size_t>(nn * G + g)];
          const T* ip = px + (nn * C + c) * HW;
          const T* dp = pdy + (nn * C + c) * HW;
          T s0 = T(0), s1 = T(0);
          for (int64_t i = 0; i < HW; ++i) {
            s0 += dp[i];
            s1 += dp[i] * (ip[i] - m) * is;
          }
          gg[c] += s1;
          gb[c] += s0;
        }
      if (gv.requires_grad()) gv.accumulate(gg);
      if (bv.requires_grad()) bv.accumulate(gb);
    }
  });
}

#define VGAMBA_INSTANTIATE_NORM(T)                                                            \
  template Var<T> batchnorm2d(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&,        \
                              Tensor<T>&, bool, T, T);                                        \
  template Var<T> groupnorm(const Var<T>&, const Var<T>&, const Var<T>&, int, T);

VGAMBA_INSTANTIATE_NORM(float)
VGAMBA_INSTANTIATE_NORM(double)
#undef VGAMBA_INSTANTIATE_NORM

}  // namespace vgamba
