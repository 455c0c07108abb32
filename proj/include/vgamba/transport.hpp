#pragma once

#include "vgamba/backbone.hpp"
#include "vgamba/optim.hpp"

namespace vgamba {

enum class TransportShape { disc, box };

// One corner-to-opposite-corner translation pair: the same binary raster
// appears flush in a corner of the input and in the diagonally opposite
// corner of the target, a displacement of (S-k, S-k) for shape extent k.
template <typename T>
struct TransportSample {
  Tensor<T> input;   // [1, S, S], values in {0, 1}
  Tensor<T> target;  // [1, S, S]
  TransportShape kind = TransportShape::box;
  int corner = 0;  // source corner: 0 TL, 1 TR, 2 BL, 3 BR
  int extent = 0;  // k, drawn from [S/8, S/4]
};

template <typename T>
std::vector<TransportSample<T>> gen_transport_dataset(int size, int n_samples,
                                                      const std::vector<TransportShape>& kinds,
                                                      uint64_t seed);

struct TransportConfig {
  int epochs = 30;
  int batch = 4;
  double lr = 3e-3;
  double weight_decay = 0.01;
  bool cosine_lr = true;  // half-cosine decay of lr over the epoch budget
  double val_fraction = 0.2;
  uint64_t seed = 1;                // split and batch-order streams
  std::string checkpoint_stem;      // empty: no checkpoint written
};

struct EpochStats {
  double train_mse = 0.0;
  double val_mse = 0.0;
  double seconds = 0.0;  // wall clock, non-deterministic
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

// Stacks samples into a batch; the single gray channel is replicated to the
// three the stem expects. Returns (input [B,3,S,S], target [B,1,S,S]).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> stack_batch(const std::vector<TransportSample<T>>& data,
                                            const std::vector<int64_t>& idx);

// Mean over samples of the mean squared pixel error of the dense head.
template <typename T>
double evaluate_mse(Backbone<T>& model, const std::vector<TransportSample<T>>& data);

// AdamW (decoupled decay, betas 0.9/0.999) against pixel MSE, seed-stable
// 80/20 split. A non-finite loss aborts with the first offending module named.
template <typename T>
TrainHistory train_transport(Backbone<T>& model, const std::vector<TransportSample<T>>& data,
                             const TransportConfig& cfg);

extern template std::vector<TransportSample<float>> gen_transport_dataset(
    int, int, const std::vector<TransportShape>&, uint64_t);
extern template std::vector<TransportSample<double>> gen_transport_dataset(
    int, int, const std::vector<TransportShape>&, uint64_t);
extern template double evaluate_mse(Backbone<float>&, const std::vector<TransportSample<float>>&);
extern template double evaluate_mse(Backbone<double>&, const std::vector<TransportSample<double>>&);
extern template TrainHistory train_transport(Backbone<float>&,
                                             const std::vector<TransportSample<float>>&,
                                             const TransportConfig&);
extern template TrainHistory train_transport(Backbone<double>&,
                                             const std::vector<TransportSample<double>>&,
                                             const TransportConfig&);

}  // namespace vgamba
