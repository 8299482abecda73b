#include "seqcluster/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "seqcluster/error.hpp"

namespace seqcluster {

Tensor finite_difference_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                              double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite_difference_grad: eps must be positive");
  Tensor probe = x;
  Tensor out(x.shape(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_difference_grad: non-finite evaluation at coordinate " +
                         std::to_string(i));
    }
    out[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

GradCheckResult compare_gradients(const Tensor& analytic, const Tensor& numeric, double rel_tol,
                                  double abs_floor) {
  if (analytic.size() != numeric.size()) {
    throw ShapeError("compare_gradients: shape " + shape_string(analytic.shape()) + " vs " +
                     shape_string(numeric.shape()));
  }
  GradCheckResult r;
  r.passed = true;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double abs_err = std::abs(a - n);
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    if (abs_err <= abs_floor) continue;
    const double rel = abs_err / std::max(std::abs(a), std::abs(n));
    r.max_rel_error = std::max(r.max_rel_error, rel);
    if (rel > rel_tol) r.passed = false;
  }
  return r;
}

}  // namespace seqcluster
