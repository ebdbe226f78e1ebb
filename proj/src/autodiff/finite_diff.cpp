#include "autodiff/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ocpg {

namespace {

GradientVector central(const ScalarFn& fn, const ParameterStore& store, bool relative, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff: step must be positive");
  ParameterStore probe = store;
  GradientVector grad(store.size(), "finite_diff");
  for (std::size_t i = 0; i < store.size(); ++i) {
    const double x = store[i];
    const double step = relative ? h * (1.0 + std::abs(x)) : h;
    probe[i] = x + step;
    const double fp = fn(probe);
    probe[i] = x - step;
    const double fm = fn(probe);
    probe[i] = x;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw std::domain_error("finite_diff: non-finite function value at index " + std::to_string(i));
    }
    grad.values[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

}  // namespace

GradientVector finite_diff(const ScalarFn& fn, const ParameterStore& store, double h) {
  return central(fn, store, false, h);
}

GradientVector finite_diff_relative(const ScalarFn& fn, const ParameterStore& store, double h) {
  return central(fn, store, true, h);
}

double relative_error_inf(const GradientVector& grad, const GradientVector& reference) {
  if (grad.size() != reference.size()) throw std::invalid_argument("relative_error_inf: size mismatch");
  double err = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) err = std::max(err, std::abs(grad[i] - reference[i]));
  return err / std::max(1.0, reference.norm_inf());
}

}  // namespace ocpg
