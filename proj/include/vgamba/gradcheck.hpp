#pragma once

#include <functional>

#include "vgamba/autodiff.hpp"

namespace vgamba {

template <typename T>
struct GradReport {
  bool passed = false;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  int64_t worst_index = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Central differences, component by component: (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps).
// f must be deterministic and finite at every probe point.
template <typename T>
Tensor<T> finite_difference_gradient(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x,
                                     T eps);

// Reverse-mode gradient of the scalar-valued f at x against the finite-difference
// estimate. Relative error uses max(|analytic|, |numeric|, 1e-12) as denominator.
template <typename T>
GradReport<T> check_gradients(const std::function<Var<T>(const Var<T>&)>& f, const Tensor<T>& x,
                              T eps, T tol);

// Same comparison for a leaf that lives inside a model (a parameter): loss_fn
// rebuilds the scalar loss from current parameter values; `param` is the leaf
// whose gradient is certified. The leaf's values are perturbed in place for
// the difference quotients and restored exactly.
template <typename T>
GradReport<T> check_param_gradients(const std::function<Var<T>()>& loss_fn, Var<T> param, T eps,
                                    T tol);

extern template Tensor<float> finite_difference_gradient(
    const std::function<float(const Tensor<float>&)>&, const Tensor<float>&, float);
extern template Tensor<double> finite_difference_gradient(
    const std::function<double(const Tensor<double>&)>&, const Tensor<double>&, double);
extern template GradReport<float> check_gradients(
    const std::function<Var<float>(const Var<float>&)>&, const Tensor<float>&, float, float);
extern template GradReport<double> check_gradients(
    const std::function<Var<double>(const Var<double>&)>&, const Tensor<double>&, double, double);
extern template GradReport<float> check_param_gradients(const std::function<Var<float>()>&,
                                                        Var<float>, float, float);
extern template GradReport<double> check_param_gradients(const std::function<Var<double>()>&,
                                                         Var<double>, double, double);

}  // namespace vgamba
