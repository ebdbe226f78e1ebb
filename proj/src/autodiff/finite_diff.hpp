#pragma once

#include <functional>

#include "autodiff/parameter_store.hpp"

namespace ocpg {

using ScalarFn = std::function<double(const ParameterStore&)>;

/// Central differences (f(θ+h·eᵢ) − f(θ−h·eᵢ)) / 2h for every index, with a
/// fixed step h.
GradientVector finite_diff(const ScalarFn& fn, const ParameterStore& store, double h);

/// Same, with the per-index step h·(1 + |θᵢ|).
GradientVector finite_diff_relative(const ScalarFn& fn, const ParameterStore& store, double h);

/// ∞-norm error of `grad` against `reference`, relative to
/// max(1, ‖reference‖∞).
double relative_error_inf(const GradientVector& grad, const GradientVector& reference);

}  // namespace ocpg
