#pragma once

#include "vgamba/module.hpp"

namespace vgamba {

template <typename T>
struct AdamWConfig {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T weight_decay = T(0.05);
};

// Adam with decoupled weight decay. Decay applies to every parameter; a
// parameter whose gradient was never produced in the step is treated as
// having a zero gradient.
template <typename T>
class AdamW {
 public:
  AdamW(Module<T>& model, const AdamWConfig<T>& cfg);

  void step();
  void zero_grad();
  int64_t steps_taken() const { return t_; }
  void set_lr(T lr) { cfg_.lr = lr; }

 private:
  Module<T>* model_;
  AdamWConfig<T> cfg_;
  int64_t t_ = 0;
  std::vector<Var<T>> params_;
  std::vector<Tensor<T>> m_, v_;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace vgamba
