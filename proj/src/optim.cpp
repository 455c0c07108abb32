#include "vgamba/optim.hpp"

#include <cmath>

namespace vgamba {

template <typename T>
AdamW<T>::AdamW(Module<T>& model, const AdamWConfig<T>& cfg) : model_(&model), cfg_(cfg) {
  for (auto& [name, p] : model.named_parameters()) {
    params_.push_back(p);
    m_.push_back(Tensor<T>::zeros(p.shape()));
    v_.push_back(Tensor<T>::zeros(p.shape()));
  }
}

template <typename T>
void AdamW<T>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Var<T>& p = params_[i];
    Tensor<T>& w = p.value_mut();
    const Tensor<T>* g = p.has_grad() ? &p.grad_const() : nullptr;
    Tensor<T>& m = m_[i];
    Tensor<T>& v = v_[i];
    for (int64_t j = 0; j < w.numel(); ++j) {
      const T gj = g ? (*g)[j] : T(0);
      m[j] = cfg_.beta1 * m[j] + (T(1) - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (T(1) - cfg_.beta2) * gj * gj;
      const T mhat = static_cast<T>(m[j] / bc1);
      const T vhat = static_cast<T>(v[j] / bc2);
      w[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[j]);
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  model_->zero_grad();
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace vgamba
