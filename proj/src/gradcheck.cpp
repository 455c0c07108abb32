#include "vgamba/gradcheck.hpp"

#include <cmath>

namespace vgamba {

template <typename T>
Tensor<T> finite_difference_gradient(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x,
                                     T eps) {
  if (eps <= T(0)) throw ShapeError("finite_difference_gradient: eps must be positive");
  Tensor<T> g(x.shape());
  Tensor<T> probe = x;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const T orig = probe[i];
    probe[i] = orig + eps;
    const T fp = f(probe);
    probe[i] = orig - eps;
    const T fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)))
      throw NumericalError("finite_difference_gradient: non-finite evaluation at index " +
                           std::to_string(i));
    g[i] = (fp - fm) / (T(2) * eps);
  }
  return g;
}

template <typename T>
GradReport<T> check_gradients(const std::function<Var<T>(const Var<T>&)>& f, const Tensor<T>& x,
                              T eps, T tol) {
  Var<T> leaf = Var<T>::leaf(x, /*requires_grad=*/true);
  Var<T> y = f(leaf);
  if (y.numel() != 1) throw ShapeError("check_gradients: f must return a scalar");
  if (!y.value().all_finite()) throw NumericalError("check_gradients: non-finite function value");
  y.backward();
  if (!leaf.has_grad())
    throw ShapeError("check_gradients: f does not depend on x (no gradient reached the input)");
  const Tensor<T>& analytic = leaf.grad_const();
  if (analytic.shape() != x.shape())
    throw ShapeError("check_gradients: gradient shape " + shape_str(analytic.shape()) +
                     " does not match input " + shape_str(x.shape()));
  if (!analytic.all_finite()) throw NumericalError("check_gradients: non-finite analytic gradient");

  const std::function<T(const Tensor<T>&)> scalar_f = [&f](const Tensor<T>& probe) {
    NoGradGuard guard;
    Var<T> v = Var<T>::leaf(probe, false);
    return f(v).value()[0];
  };
  const Tensor<T> numeric = finite_difference_gradient(scalar_f, x, eps);

  GradReport<T> report;
  report.passed = true;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double a = static_cast<double>(analytic[i]);
    const double m = static_cast<double>(numeric[i]);
    const double abs_err = std::abs(a - m);
    const double denom = std::max({std::abs(a), std::abs(m), 1e-12});
    const double rel = abs_err / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = m;
    }
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
  }
  report.passed = report.max_rel_error <= static_cast<double>(tol);
  return report;
}

template <typename T>
GradReport<T> check_param_gradients(const std::function<Var<T>()>& loss_fn, Var<T> param, T eps,
                                    T tol) {
  if (!param.defined() || !param.requires_grad())
    throw ShapeError("check_param_gradients: param must be a gradient-tracked leaf");
  param.zero_grad();
  Var<T> y = loss_fn();
  if (y.numel() != 1) throw ShapeError("check_param_gradients: loss must be a scalar");
  if (!y.value().all_finite())
    throw NumericalError("check_param_gradients: non-finite loss value");
  y.backward();
  if (!param.has_grad())
    throw ShapeError("check_param_gradients: loss does not depend on the parameter");
  const Tensor<T> analytic = param.grad_const();
  if (!analytic.all_finite())
    throw NumericalError("check_param_gradients: non-finite analytic gradient");

  Tensor<T>& w = param.value_mut();
  auto eval = [&]() {
    NoGradGuard guard;
    return loss_fn().value()[0];
  };
  GradReport<T> report;
  for (int64_t i = 0; i < w.numel(); ++i) {
    const T orig = w[i];
    w[i] = orig + eps;
    const T fp = eval();
    w[i] = orig - eps;
    const T fm = eval();
    w[i] = orig;
    if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)))
      throw NumericalError("check_param_gradients: non-finite evaluation at index " +
                           std::to_string(i));
    const double a = static_cast<double>(analytic[i]);
    const double m = static_cast<double>((fp - fm) / (T(2) * eps));
    const double abs_err = std::abs(a - m);
    const double denom = std::max({std::abs(a), std::abs(m), 1e-12});
    const double rel = abs_err / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = m;
    }
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
  }
  report.passed = report.max_rel_error <= static_cast<double>(tol);
  return report;
}

template Tensor<float> finite_difference_gradient(const std::function<float(const Tensor<float>&)>&,
                                                  const Tensor<float>&, float);
template Tensor<double> finite_difference_gradient(
    const std::function<double(const Tensor<double>&)>&, const Tensor<double>&, double);
template GradReport<float> check_gradients(const std::function<Var<float>(const Var<float>&)>&,
                                           const Tensor<float>&, float, float);
template GradReport<double> check_gradients(const std::function<Var<double>(const Var<double>&)>&,
                                            const Tensor<double>&, double, double);
template GradReport<float> check_param_gradients(const std::function<Var<float>()>&, Var<float>,
                                                 float, float);
template GradReport<double> check_param_gradients(const std::function<Var<double>()>&, Var<double>,
                                                  double, double);

}  // namespace vgamba
