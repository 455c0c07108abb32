#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vgamba/tensor.hpp"

namespace vgamba {

template <typename T>
class Var;

namespace detail {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<Var<T>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node<T>&)> backward;
};

}  // namespace detail

// Reverse-mode autodiff handle over a shared graph node. Ops build new nodes;
// backward() runs the tape in reverse topological order.
template <typename T>
class Var {
 public:
  Var() = default;

  static Var leaf(Tensor<T> value, bool requires_grad = false);

  // Generic op constructor. When grad mode is off or no parent requires grad,
  // parents and the closure are dropped and the node is a constant.
  static Var op(Tensor<T> value, std::vector<Var> parents,
                std::function<void(detail::Node<T>&)> backward);

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor<T>& value() const { return n_->value; }
  Tensor<T>& value_mut() { return n_->value; }
  const Shape& shape() const { return n_->value.shape(); }
  int64_t numel() const { return n_->value.numel(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }

  bool has_grad() const { return n_ && n_->grad.defined(); }
  Tensor<T>& grad();
  const Tensor<T>& grad_const() const { return n_->grad; }
  void zero_grad();

  // Accumulate into this node's grad (respects requires_grad).
  void accumulate(const Tensor<T>& g);

  // Scalar outputs only. Seeds d(out)/d(out)=1 and propagates.
  void backward();

  detail::Node<T>* node() const { return n_.get(); }

 private:
  std::shared_ptr<detail::Node<T>> n_;
};

// RAII guard disabling tape construction (forward-only evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

extern template class Var<float>;
extern template class Var<double>;

}  // namespace vgamba
