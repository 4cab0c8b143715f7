#pragma once

#include <functional>

#include "casimir/types.hpp"

namespace casimir {

// Ordinary least squares y = slope * x + intercept.
// parameters = [slope, intercept]; covariance from residual variance.
FitResult fit_line(const Vec& x, const Vec& y);

// Least squares y = a x^2 + b x + c; parameters = [a, b, c].
FitResult fit_parabola(const Vec& x, const Vec& y);

struct NonlinearOptions {
  Vec lower_bounds;     // empty = unbounded; else one entry per parameter
  Vec upper_bounds;
  Vec parameter_scale;  // finite-difference scale; empty = max(|initial|, 1)
  int max_iterations = 500;
  double lambda_init = 1e-3;
  double step_tol = 1e-10;  // relative accepted-step size
  double cost_tol = 1e-12;  // relative cost decrease
};

// Damped Levenberg-Marquardt on a residual vector function. Jacobian by
// central finite differences with step 1e-6 of each parameter's scale; box
// bounds enforced by clipping after each step. A fit that stalls (damping
// exhausted with zero gradient) is reported converged at the local minimum;
// exhausting max_iterations reports converged = false.
FitResult fit_nonlinear(const std::function<Vec(const Vec&)>& residual_fn,
                        const Vec& initial, const NonlinearOptions& opts = {});

}  // namespace casimir
