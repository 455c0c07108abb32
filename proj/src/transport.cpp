#include "vgamba/transport.hpp"

#include <chrono>
#include <cmath>

#include "vgamba/checkpoint.hpp"
#include "vgamba/errors.hpp"

namespace vgamba {

namespace {

// Binary raster of the shape in a k x k bounding box.
std::vector<char> raster(TransportShape kind, int k) {
  std::vector<char> r(static_cast<size_t>(k) * k, 0);
  if (kind == TransportShape::box) {
    std::fill(r.begin(), r.end(), 1);
    return r;
  }
  const double c = (k - 1) / 2.0;
  const double rad = k / 2.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if ((i - c) * (i - c) + (j - c) * (j - c) <= rad * rad) r[static_cast<size_t>(i) * k + j] = 1;
  return r;
}

template <typename T>
void stamp(Tensor<T>& img, int size, const std::vector<char>& r, int k, int corner) {
  const int row0 = corner < 2 ? 0 : size - k;
  const int col0 = corner % 2 == 0 ? 0 : size - k;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (r[static_cast<size_t>(i) * k + j])
        img[static_cast<int64_t>(row0 + i) * size + (col0 + j)] = T(1);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i)
    std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(rng.uniform_int(0, i))]);
}

}  // namespace

template <typename T>
std::vector<TransportSample<T>> gen_transport_dataset(int size, int n_samples,
                                                      const std::vector<TransportShape>& kinds,
                                                      uint64_t seed) {
  if (size < 16) throw ConfigError("transport canvas must be at least 16");
  if (n_samples <= 0) throw ConfigError("need a positive sample count");
  if (kinds.empty()) throw ConfigError("need at least one shape kind");
  Rng rng(derive_seed(seed, "transport_data"));
  std::vector<TransportSample<T>> out;
  out.reserve(static_cast<size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    TransportSample<T> sample;
    sample.kind = kinds[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(kinds.size()) - 1))];
    sample.extent = static_cast<int>(rng.uniform_int(size / 8, size / 4));
    sample.corner = static_cast<int>(rng.uniform_int(0, 3));
    const std::vector<char> r = raster(sample.kind, sample.extent);
    sample.input = Tensor<T>::zeros({1, size, size});
    sample.target = Tensor<T>::zeros({1, size, size});
    stamp(sample.input, size, r, sample.extent, sample.corner);
    stamp(sample.target, size, r, sample.extent, 3 - sample.corner);
    out.push_back(std::move(sample));
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> stack_batch(const std::vector<TransportSample<T>>& data,
                                            const std::vector<int64_t>& idx) {
  if (idx.empty()) throw ConfigError("empty batch");
  const Shape& ss = data[0].input.shape();  // [1, S, S]
  const int64_t B = static_cast<int64_t>(idx.size());
  const int64_t hw = ss[1] * ss[2];
  Tensor<T> x({B, 3, ss[1], ss[2]});
  Tensor<T> y({B, 1, ss[1], ss[2]});
  for (int64_t b = 0; b < B; ++b) {
    const TransportSample<T>& s = data[static_cast<size_t>(idx[static_cast<size_t>(b)])];
    for (int64_t i = 0; i < hw; ++i) {
      const T v = s.input[i];
      x[(b * 3 + 0) * hw + i] = v;
      x[(b * 3 + 1) * hw + i] = v;
      x[(b * 3 + 2) * hw + i] = v;
      y[b * hw + i] = s.target[i];
    }
  }
  return {std::move(x), std::move(y)};
}

namespace {

template <typename T>
Var<T> mse_loss(const Var<T>& pred, const Tensor<T>& target) {
  Var<T> diff = sub(pred, Var<T>::leaf(target));
  return mul_scalar(sum_all(mul(diff, diff)), static_cast<T>(1.0 / diff.numel()));
}

}  // namespace

template <typename T>
double evaluate_mse(Backbone<T>& model, const std::vector<TransportSample<T>>& data) {
  if (data.empty()) throw ConfigError("cannot evaluate on an empty dataset");
  NoGradGuard ng;
  const bool was_training = model.training();
  model.set_training(false);
  double total = 0.0;
  const int64_t n = static_cast<int64_t>(data.size());
  const int64_t chunk = 16;
  for (int64_t at = 0; at < n; at += chunk) {
    std::vector<int64_t> idx;
    for (int64_t i = at; i < std::min(n, at + chunk); ++i) idx.push_back(i);
    auto [x, y] = stack_batch(data, idx);
    Var<T> pred = model.forward_dense(Var<T>::leaf(std::move(x)));
    const Tensor<T>& pv = pred.value();
    const int64_t per = pv.numel() / static_cast<int64_t>(idx.size());
    for (size_t b = 0; b < idx.size(); ++b) {
      double acc = 0.0;
      for (int64_t i = 0; i < per; ++i) {
        const double d = static_cast<double>(pv[static_cast<int64_t>(b) * per + i]) -
                         static_cast<double>(y[static_cast<int64_t>(b) * per + i]);
        acc += d * d;
      }
      total += acc / static_cast<double>(per);
    }
  }
  model.set_training(was_training);
  return total / static_cast<double>(n);
}

template <typename T>
TrainHistory train_transport(Backbone<T>& model, const std::vector<TransportSample<T>>& data,
                             const TransportConfig& cfg) {
  if (!model.spec().dense_head) throw ConfigError("transport training needs the dense head");
  if (cfg.epochs < 1 || cfg.batch < 1) throw ConfigError("bad epoch or batch count");
  if (data.size() < 5) throw ConfigError("dataset too small to split");

  std::vector<int64_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
  Rng split_rng(derive_seed(cfg.seed, "split"));
  shuffle(order, split_rng);
  const size_t n_val = std::max<size_t>(1, static_cast<size_t>(cfg.val_fraction * data.size()));
  std::vector<int64_t> train_idx(order.begin(), order.end() - static_cast<int64_t>(n_val));
  std::vector<TransportSample<T>> val;
  for (auto it = order.end() - static_cast<int64_t>(n_val); it != order.end(); ++it)
    val.push_back(data[static_cast<size_t>(*it)]);

  AdamWConfig<T> ocfg;
  ocfg.lr = static_cast<T>(cfg.lr);
  ocfg.weight_decay = static_cast<T>(cfg.weight_decay);
  AdamW<T> opt(model, ocfg);

  TrainHistory history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    model.set_training(true);
    if (cfg.cosine_lr)
      opt.set_lr(static_cast<T>(cfg.lr * 0.5 *
                                (1.0 + std::cos(M_PI * epoch / static_cast<double>(cfg.epochs)))));
    Rng erng(derive_seed(cfg.seed, "epoch" + std::to_string(epoch)));
    shuffle(train_idx, erng);

    double train_sq = 0.0;
    int64_t train_px = 0;
    for (size_t at = 0; at < train_idx.size(); at += static_cast<size_t>(cfg.batch)) {
      std::vector<int64_t> idx(train_idx.begin() + static_cast<int64_t>(at),
                               train_idx.begin() +
                                   static_cast<int64_t>(std::min(train_idx.size(),
                                                                 at + static_cast<size_t>(cfg.batch))));
      auto [x, y] = stack_batch(data, idx);
      Var<T> xv = Var<T>::leaf(std::move(x));
      Var<T> loss = mse_loss(model.forward_dense(xv), y);
      const double lv = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(lv)) {
        NanProbe::enable();
        model.forward_dense(xv);
        std::string offender = NanProbe::first_offender();
        NanProbe::disable();
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                              "; first non-finite output from \"" +
                              (offender.empty() ? "(loss only)" : offender) + "\"");
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
      const int64_t px = static_cast<int64_t>(idx.size());
      train_sq += lv * static_cast<double>(px);
      train_px += px;
    }

    EpochStats stats;
    stats.train_mse = train_sq / static_cast<double>(train_px);
    stats.val_mse = evaluate_mse(model, val);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(stats);
  }
  if (!cfg.checkpoint_stem.empty()) save_checkpoint(model, cfg.checkpoint_stem);
  return history;
}

template std::vector<TransportSample<float>> gen_transport_dataset(
    int, int, const std::vector<TransportShape>&, uint64_t);
template std::vector<TransportSample<double>> gen_transport_dataset(
    int, int, const std::vector<TransportShape>&, uint64_t);
template std::pair<Tensor<float>, Tensor<float>> stack_batch(
    const std::vector<TransportSample<float>>&, const std::vector<int64_t>&);
template std::pair<Tensor<double>, Tensor<double>> stack_batch(
    const std::vector<TransportSample<double>>&, const std::vector<int64_t>&);
template double evaluate_mse(Backbone<float>&, const std::vector<TransportSample<float>>&);
template double evaluate_mse(Backbone<double>&, const std::vector<TransportSample<double>>&);
template TrainHistory train_transport(Backbone<float>&, const std::vector<TransportSample<float>>&,
                                      const TransportConfig&);
template TrainHistory train_transport(Backbone<double>&,
                                      const std::vector<TransportSample<double>>&,
                                      const TransportConfig&);

}  // namespace vgamba
