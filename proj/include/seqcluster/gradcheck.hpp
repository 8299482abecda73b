#pragma once

#include <functional>

#include "seqcluster/tensor.hpp"

namespace seqcluster {

/// Central-difference gradient of a scalar function:
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate i.
/// Throws NumericError if f returns a non-finite value, ConfigError if eps <= 0.
Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double eps = 1e-5);

struct GradCheckResult {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;  // |a - n| / max(|a|, |n|), counted only where |a - n| > abs_floor
  bool passed = false;
};

/// Compares an analytic gradient against a numeric one. An entry passes when
/// its absolute error is below abs_floor or its relative error is below rel_tol.
GradCheckResult compare_gradients(const Tensor& analytic, const Tensor& numeric, double rel_tol = 1e-4,
                                  double abs_floor = 1e-6);

}  // namespace seqcluster
