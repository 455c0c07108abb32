#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "vgamba/flops.hpp"
#include "vgamba/ops.hpp"
#include "vgamba/parallel.hpp"

namespace vgamba {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

inline int64_t conv_out(int64_t in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// cols: [Cin*k*k, Ho*Wo] for one sample.
template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int k, int stride, int pad, T* cols,
            int64_t Ho, int64_t Wo) {
  const int64_t L = Ho * Wo;
  for (int64_t c = 0; c < C; ++c)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        T* row = cols + ((c * k + kh) * k + kw) * L;
        for (int64_t oh = 0; oh < Ho; ++oh) {
          const int64_t ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) {
            std::fill(row + oh * Wo, row + (oh + 1) * Wo, T(0));
            continue;
          }
          const T* src = x + (c * H + ih) * W;
          for (int64_t ow = 0; ow < Wo; ++ow) {
            const int64_t iw = ow * stride - pad + kw;
            row[oh * Wo + ow] = (iw < 0 || iw >= W) ? T(0) : src[iw];
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, int64_t C, int64_t H, int64_t W, int k, int stride, int pad, T* x,
            int64_t Ho, int64_t Wo) {
  const int64_t L = Ho * Wo;
  std::fill(x, x + C * H * W, T(0));
  for (int64_t c = 0; c < C; ++c)
    for (int kh = 0; kh < k; ++kh)
      for (int kw = 0; kw < k; ++kw) {
        const T* row = cols + ((c * k + kh) * k + kw) * L;
        for (int64_t oh = 0; oh < Ho; ++oh) {
          const int64_t ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) continue;
          T* dst = x + (c * H + ih) * W;
          for (int64_t ow = 0; ow < Wo; ++ow) {
            const int64_t iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < W) dst[iw] += row[oh * Wo + ow];
          }
        }
      }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& b, int stride,
              int pad) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4) throw ShapeError("conv2d expects x [B,C,H,W], w [F,C,k,k]");
  if (ws[1] != xs[1])
    throw ShapeError("conv2d channel mismatch: x " + shape_str(xs) + ", w " + shape_str(ws));
  if (ws[2] != ws[3]) throw ShapeError("conv2d kernel must be square");
  const int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3], F = ws[0];
  const int k = static_cast<int>(ws[2]);
  const int64_t Ho = conv_out(H, k, stride, pad), Wo = conv_out(W, k, stride, pad);
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d output would be empty for input " + shape_str(xs));
  const int64_t L = Ho * Wo, ck2 = C * k * k;

  Tensor<T> out({B, F, Ho, Wo});
  const T* px = x.value().data();
  const T* pw = w.value().data();
  T* po = out.data();
  parallel_for(B, [&](int64_t b0, int64_t b1) {
    std::vector<T> cols(static_cast<size_t>(ck2 * L));
    for (int64_t n = b0; n < b1; ++n) {
      im2col(px + n * C * H * W, C, H, W, k, stride, pad, cols.data(), Ho, Wo);
      ECMap<T> mw(pw, F, ck2);
      ECMap<T> mc(cols.data(), ck2, L);
      EMap<T> mo(po + n * F * L, F, L);
      mo.noalias() = mw * mc;
    }
  });
  if (b) {
    const T* pb = b->value().data();
    for (int64_t n = 0; n < B; ++n)
      for (int64_t f = 0; f < F; ++f) {
        T* row = po + (n * F + f) * L;
        const T v = pb[f];
        for (int64_t i = 0; i < L; ++i) row[i] += v;
      }
  }
  FlopRecorder::add(B * F * L * ck2);

  std::vector<Var<T>> parents = {x, w};
  if (b) parents.push_back(*b);
  const bool has_bias = b.has_value();
  return Var<T>::op(
      std::move(out), std::move(parents),
      [B, C, H, W, F, k, stride, pad, Ho, Wo, L, ck2, has_bias](detail::Node<T>& n) {
        auto& xv = n.parents[0];
        auto& wv = n.parents[1];
        const T* pg = n.grad.data();
        const T* pw = wv.value().data();
        const T* px = xv.value().data();

        if (xv.requires_grad()) {
          Tensor<T> gx({B, C, H, W});
          T* pgx = gx.data();
          parallel_for(B, [&](int64_t b0, int64_t b1) {
            std::vector<T> cols(static_cast<size_t>(ck2 * L));
            for (int64_t nn = b0; nn < b1; ++nn) {
              ECMap<T> mw(pw, F, ck2);
              ECMap<T> mg(pg + nn * F * L, F, L);
              EMap<T> mc(cols.data(), ck2, L);
              mc.noalias() = mw.transpose() * mg;
              col2im(cols.data(), C, H, W, k, stride, pad, pgx + nn * C * H * W, Ho, Wo);
            }
          });
          xv.accumulate(gx);
        }
        if (wv.requires_grad()) {
          Tensor<T> gw({F, C, static_cast<int64_t>(k), static_cast<int64_t>(k)});
          EMap<T> mgw(gw.data(), F, ck2);
          std::vector<T> cols(static_cast<size_t>(ck2 * L));
          for (int64_t nn = 0; nn < B; ++nn) {
            im2col(px + nn * C * H * W, C, H, W, k, stride, pad, cols.data(), Ho, Wo);
            ECMap<T> mg(pg + nn * F * L, F, L);
            ECMap<T> mc(cols.data(), ck2, L);
            mgw.noalias() += mg * mc.transpose();
          }
          wv.accumulate(gw);
        }
        if (has_bias && n.parents[2].requires_grad()) {
          Tensor<T> gb({F});
          T* pgb = gb.data();
          for (int64_t nn = 0; nn < B; ++nn)
            for (int64_t f = 0; f < F; ++f) {
              const T* row = pg + (nn * F + f) * L;
              T acc = T(0);
              for (int64_t i = 0; i < L; ++i) acc += row[i];
              pgb[f] += acc;
            }
          n.parents[2].accumulate(gb);
        }
      });
}

template <typename T>
Var<T> depthwise_conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 2) throw ShapeError("depthwise_conv1d expects x [B,M,E], w [E,K]");
  const int64_t B = xs[0], M = xs[1], E = xs[2], K = ws[1];
  if (ws[0] != E || b.shape() != Shape{E})
    throw ShapeError("depthwise_conv1d parameter shapes inconsistent with input " + shape_str(xs));
  if (K % 2 == 0) throw ShapeError("depthwise_conv1d kernel must be odd for symmetric padding");
  const int64_t P = (K - 1) / 2;

  Tensor<T> out(xs);
  const T* px = x.value().data();
  const T* pw = w.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  for (int64_t n = 0; n < B; ++n)
    for (int64_t m = 0; m < M; ++m)
      for (int64_t e = 0; e < E; ++e) {
        T acc = pb[e];
        for (int64_t kk = 0; kk < K; ++kk) {
          const int64_t mm = m + kk - P;
          if (mm < 0 || mm >= M) continue;
          acc += pw[e * K + kk] * px[(n * M + mm) * E + e];
        }
        po[(n * M + m) * E + e] = acc;
      }
  FlopRecorder::add(B * M * E * K);

  return Var<T>::op(std::move(out), {x, w, b}, [B, M, E, K, P](detail::Node<T>& n) {
    auto& xv = n.parents[0];
    auto& wv = n.parents[1];
    auto& bv = n.parents[2];
    const T* pg = n.grad.data();
    const T* px = xv.value().data();
    const T* pw = wv.value().data();
    if (xv.requires_grad()) {
      Tensor<T> gx(xv.shape());
      T* pgx = gx.data();
      for (int64_t nn = 0; nn < B; ++nn)
        for (int64_t m = 0; m < M; ++m)
          for (int64_t e = 0; e < E; ++e) {
            const T g = pg[(nn * M + m) * E + e];
            for (int64_t kk = 0; kk < K; ++kk) {
              const int64_t mm = m + kk - P;
              if (mm >= 0 && mm < M) pgx[(nn * M + mm) * E + e] += g * pw[e * K + kk];
            }
          }
      xv.accumulate(gx);
    }
    if (wv.requires_grad()) {
      Tensor<T> gw(wv.shape());
      T* pgw = gw.data();
      for (int64_t nn = 0; nn < B; ++nn)
        for (int64_t m = 0; m < M; ++m)
          for (int64_t e = 0; e < E; ++e) {
            const T g = pg[(nn * M + m) * E + e];
            for (int64_t kk = 0; kk < K; ++kk) {
              const int64_t mm = m + kk - P;
              if (mm >= 0 && mm < M) pgw[e * K + kk] += g * px[(nn * M + mm) * E + e];
            }
          }
      wv.accumulate(gw);
    }
    if (bv.requires_grad()) {
      Tensor<T> gb(bv.shape());
      T* pgb = gb.data();
      for (int64_t nn = 0; nn < B; ++nn)
        for (int64_t m = 0; m < M; ++m)
          for (int64_t e = 0; e < E; ++e) pgb[e] += pg[(nn * M + m) * E + e];
      bv.accumulate(gb);
    }
  });
}

template <typename T>
Var<T> maxpool2d(const Var<T>& x, int k, int stride, int pad) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("maxpool2d expects [B,C,H,W]");
  const int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int64_t Ho = conv_out(H, k, stride, pad), Wo = conv_out(W, k, stride, pad);
  if (Ho <= 0 || Wo <= 0) throw ShapeError("maxpool2d output would be empty");
  Tensor<T> out({B, C, Ho, Wo});
  std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
  const T* px = x.value().data();
  T* po = out.data();
  int64_t oi = 0;
  for (int64_t n = 0; n < B; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const T* plane = px + (n * C + c) * H * W;
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow, ++oi) {
          T best = -std::numeric_limits<T>::infinity();
          int64_t bidx = -1;
          for (int kh = 0; kh < k; ++kh) {
            const int64_t ih = oh * stride - pad + kh;
            if (ih < 0 || ih >= H) continue;
            for (int kw = 0; kw < k; ++kw) {
              const int64_t iw = ow * stride - pad + kw;
              if (iw < 0 || iw >= W) continue;
              const T v = plane[ih * W + iw];
              if (v > best) {
                best = v;
                bidx = (n * C + c) * H * W + ih * W + iw;
              }
            }
          }
          po[oi] = best;
          argmax[static_cast<size_t>(oi)] = bidx;
        }
    }
  return Var<T>::op(std::move(out), {x}, [argmax](detail::Node<T>& n) {
    auto& p = n.parents[0];
    if (!p.requires_grad()) return;
    Tensor<T> gx(p.shape());
    T* pgx = gx.data();
    const T* pg = n.grad.data();
    for (int64_t i = 0; i < n.grad.numel(); ++i)
      if (argmax[static_cast<size_t>(i)] >= 0) pgx[argmax[static_cast<size_t>(i)]] += pg[i];
    p.accumulate(gx);
  });
}

template <typename T>
Var<T> avgpool2d(const Var<T>& x, int k, int stride) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("avgpool2d expects [B,C,H,W]");
  const int64_t B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int64_t Ho = conv_out(H, k, stride, 0), Wo = conv_out(W, k, stride, 0);
  if (Ho <= 0 || Wo <= 0) throw ShapeError("avgpool2d output would be empty");
  const T inv = T(1) / static_cast<T>(k * k);
  Tensor<T> out({B, C, Ho, Wo});
  const T* px = x.value().data();
  T* po = out.data();
  int64_t oi = 0;
  for (int64_t nc = 0; nc < B * C; ++nc) {
    const T* plane = px + nc * H * W;
    for (int64_t oh = 0; oh < Ho; ++oh)
      for (int64_t ow = 0; ow < Wo; ++ow, ++oi) {
        T acc = T(0);
        for (int kh = 0; kh < k; ++kh)
          for (int kw = 0; kw < k; ++kw) acc += plane[(oh * stride + kh) * W + ow * stride + kw];
        po[oi] = acc * inv;
      }
  }
  return Var<T>::op(std::move(out), {x}, [B, C, H, W, Ho, Wo, k, stride, inv](detail::Node<T>& n) {
    auto& p = n.parents[0];
    if (!p.requires_grad()) return;
    Tensor<T> gx(p.shape());
    T* pgx = gx.data();
    const T* pg = n.grad.data();
    int64_t oi = 0;
    for (int64_t nc = 0; nc < B * C; ++nc) {
      T* plane = pgx + nc * H * W;
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow, ++oi) {
          const T g = pg[oi] * inv;
          for (int kh = 0; kh < k; ++kh)
            for (int kw = 0; kw < k; ++kw) plane[(oh * stride + kh) * W + ow * stride + kw] += g;
        }
    }
    p.accumulate(gx);
  });
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw ShapeError("upsample_nearest2x expects [B,C,H,W]");
  const int64_t BC = xs[0] * xs[1], H = xs[2], W = xs[3];
  Tensor<T> out({xs[0], xs[1], H * 2, W * 2});
  const T* px = x.value().data();
  T* po = out.data();
  for (int64_t nc = 0; nc < BC; ++nc) {
    const T* ip = px + nc * H * W;
    T* op = po + nc * 4 * H * W;
    for (int64_t h = 0; h < 2 * H; ++h)
      for (int64_t w = 0; w < 2 * W; ++w) op[h * 2 * W + w] = ip[(h / 2) * W + (w / 2)];
  }
  return Var<T>::op(std::move(out), {x}, [BC, H, W](detail::Node<T>& n) {
    auto& p = n.parents[0];
    if (!p.requires_grad()) return;
    Tensor<T> gx(p.shape());
    T* pgx = gx.data();
    const T* pg = n.grad.data();
    for (int64_t nc = 0; nc < BC; ++nc) {
      T* ip = pgx + nc * H * W;
      const T* op = pg + nc * 4 * H * W;
      for (int64_t h = 0; h < 2 * H; ++h)
        for (int64_t w = 0; w < 2 * W; ++w) ip[(h / 2) * W + (w / 2)] += op[h * 2 * W + w];
    }
    p.accumulate(gx);
  });
}

template <typename T>
Var<T> resize_linear_lastdim(const Var<T>& x, int64_t out_len) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw ShapeError("resize_linear_lastdim needs rank >= 1");
  const int64_t L = xs.back();
  if (out_len < 1) throw ShapeError("resize_linear_lastdim: bad length");
  if (out_len == L) return x;
  const int64_t rows = x.numel() / L;
  Shape os = xs;
  os.back() = out_len;

  // Endpoint-aligned sample positions; degenerate L==1 broadcasts.
  std::vector<int64_t> i0(static_cast<size_t>(out_len)), i1(static_cast<size_t>(out_len));
  std::vector<T> t1(static_cast<size_t>(out_len));
  for (int64_t j = 0; j < out_len; ++j) {
    if (L == 1 || out_len == 1) {
      i0[j] = 0;
      i1[j] = 0;
      t1[j] = T(0);
    } else {
      const double pos = static_cast<double>(j) * (L - 1) / static_cast<double>(out_len - 1);
      const int64_t lo = std::min<int64_t>(static_cast<int64_t>(pos), L - 2);
      i0[j] = lo;
      i1[j] = lo + 1;
      t1[j] = static_cast<T>(pos - static_cast<double>(lo));
    }
  }

  Tensor<T> out(os);
  const T* px = x.value().data();
  T* po = out.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < out_len; ++j)
      po[r * out_len + j] =
          (T(1) - t1[j]) * px[r * L + i0[j]] + t1[j] * px[r * L + i1[j]];

  return Var<T>::op(std::move(out), {x}, [rows, L, out_len, i0, i1, t1](detail::Node<T>& n) {
    auto& p = n.parents[0];
    if (!p.requires_grad()) return;
    Tensor<T> gx(p.shape());
    T* pgx = gx.data();
    const T* pg = n.grad.data();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < out_len; ++j) {
        const T g = pg[r * out_len + j];
        pgx[r * L + i0[j]] += (T(1) - t1[j]) * g;
        pgx[r * L + i1[j]] += t1[j] * g;
      }
    p.accumulate(gx);
  });
}

#define VGAMBA_INSTANTIATE_CONV(T)                                                              \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, int, int); \
  template Var<T> depthwise_conv1d(const Var<T>&, const Var<T>&, const Var<T>&);                \
  template Var<T> maxpool2d(const Var<T>&, int, int, int);                                      \
  template Var<T> avgpool2d(const Var<T>&, int, int);                                           \
  template Var<T> upsample_nearest2x(const Var<T>&);                                            \
  template Var<T> resize_linear_lastdim(const Var<T>&, int64_t);

VGAMBA_INSTANTIATE_CONV(float)
VGAMBA_INSTANTIATE_CONV(double)
#undef VGAMBA_INSTANTIATE_CONV

}  // namespace vgamba
