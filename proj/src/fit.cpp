#include "casimir/fit.hpp"

#include <cmath>
#include <limits>

#include "casimir/errors.hpp"

namespace casimir {

namespace {

void require_xy(const Vec& x, const Vec& y, int min_n, const char* who) {
  if (x.size() != y.size())
    throw ValidationError(std::string(who) + ": x and y sizes differ");
  if (x.size() < min_n)
    throw ValidationError(std::string(who) + ": need at least " + std::to_string(min_n) +
                          " points, got " + std::to_string(x.size()));
  if (!x.allFinite() || !y.allFinite())
    throw ValidationError(std::string(who) + ": non-finite input");
}

// Covariance of polynomial LS parameters: s^2 (A^T A)^-1, with s^2 from the
// residual sum of squares over n - p degrees of freedom (zero when dof <= 0).
Mat ls_covariance(const Mat& A, const Vec& resid) {
  const auto n = A.rows();
  const auto p = A.cols();
  const double dof = static_cast<double>(n - p);
  const double s2 = dof > 0 ? resid.squaredNorm() / dof : 0.0;
  Mat AtA = A.transpose() * A;
  Mat inv = AtA.ldlt().solve(Mat::Identity(p, p));
  return s2 * inv;
}

}  // namespace

FitResult fit_line(const Vec& x, const Vec& y) {
  require_xy(x, y, 2, "fit_line");
  const auto n = x.size();
  const double xm = x.mean();
  const double ym = y.mean();
  const Vec xc = x.array() - xm;
  const double sxx = xc.squaredNorm();
  if (sxx <= 0.0) throw NumericalError("fit_line: degenerate fit, all x identical");
  const double slope = xc.dot(y) / sxx;
  const double intercept = ym - slope * xm;

  FitResult r;
  r.parameters = Vec(2);
  r.parameters << slope, intercept;
  const Vec resid = y.array() - (slope * x.array() + intercept);
  r.residual_rms = std::sqrt(resid.squaredNorm() / static_cast<double>(n));
  r.n_points = static_cast<int>(n);
  r.converged = true;
  const double dof = static_cast<double>(n - 2);
  const double s2 = dof > 0 ? resid.squaredNorm() / dof : 0.0;
  Mat cov(2, 2);
  cov(0, 0) = s2 / sxx;
  cov(0, 1) = cov(1, 0) = -s2 * xm / sxx;
  cov(1, 1) = s2 * (1.0 / static_cast<double>(n) + xm * xm / sxx);
  r.covariance = cov;
  return r;
}

FitResult fit_parabola(const Vec& x, const Vec& y) {
  require_xy(x, y, 3, "fit_parabola");
  const auto n = x.size();
  // Center x for conditioning; map coefficients back to the raw basis.
  const double xm = x.mean();
  const Vec xc = x.array() - xm;
  Mat A(n, 3);
  A.col(0) = xc.array().square();
  A.col(1) = xc;
  A.col(2) = Vec::Ones(n);

  Eigen::ColPivHouseholderQR<Mat> qr(A);
  qr.setThreshold(1e-12);
  if (qr.rank() < 3)
    throw NumericalError("fit_parabola: degenerate fit, x values do not span a parabola");
  const Vec pc = qr.solve(y);  // y = pc0 (x-xm)^2 + pc1 (x-xm) + pc2

  FitResult r;
  r.parameters = Vec(3);
  r.parameters << pc(0), pc(1) - 2.0 * pc(0) * xm,
      pc(2) + pc(0) * xm * xm - pc(1) * xm;
  const Vec resid = y - A * pc;
  r.residual_rms = std::sqrt(resid.squaredNorm() / static_cast<double>(n));
  r.n_points = static_cast<int>(n);
  r.converged = true;
  // Covariance in the raw basis: J * cov_centered * J^T with the (constant)
  // Jacobian of the basis change.
  Mat cov_c = ls_covariance(A, resid);
  Mat J = Mat::Identity(3, 3);
  J(1, 0) = -2.0 * xm;
  J(2, 0) = xm * xm;
  J(2, 1) = -xm;
  r.covariance = J * cov_c * J.transpose();
  return r;
}

FitResult fit_nonlinear(const std::function<Vec(const Vec&)>& residual_fn,
                        const Vec& initial, const NonlinearOptions& opts) {
  const auto np = initial.size();
  if (np == 0) throw ValidationError("fit_nonlinear: empty parameter vector");
  if (opts.lower_bounds.size() != 0 && opts.lower_bounds.size() != np)
    throw ValidationError("fit_nonlinear: lower_bounds size mismatch");
  if (opts.upper_bounds.size() != 0 && opts.upper_bounds.size() != np)
    throw ValidationError("fit_nonlinear: upper_bounds size mismatch");
  if (opts.max_iterations < 1)
    throw ValidationError("fit_nonlinear: max_iterations must be >= 1");

  const auto clip = [&](Vec p) {
    if (opts.lower_bounds.size()) p = p.cwiseMax(opts.lower_bounds);
    if (opts.upper_bounds.size()) p = p.cwiseMin(opts.upper_bounds);
    return p;
  };

  Vec scale(np);
  for (Eigen::Index i = 0; i < np; ++i)
    scale(i) = opts.parameter_scale.size()
                   ? std::abs(opts.parameter_scale(i))
                   : std::max(std::abs(initial(i)), 1.0);
  for (Eigen::Index i = 0; i < np; ++i)
    if (!(scale(i) > 0)) throw ValidationError("fit_nonlinear: parameter scale must be > 0");

  Vec p = clip(initial);
  Vec r = residual_fn(p);
  if (!r.allFinite())
    throw NumericalError("fit_nonlinear: residuals not finite at the initial point");
  const auto nr = r.size();
  if (nr < np) throw ValidationError("fit_nonlinear: fewer residuals than parameters");
  double cost = r.squaredNorm();

  double lambda = opts.lambda_init;
  bool converged = false;
  int iter = 0;
  Mat Jac(nr, np);

  for (; iter < opts.max_iterations && !converged; ++iter) {
    // Central finite differences, step 1e-6 of parameter scale.
    for (Eigen::Index j = 0; j < np; ++j) {
      const double h = 1e-6 * scale(j);
      Vec pp = p, pm = p;
      pp(j) += h;
      pm(j) -= h;
      const Vec rp = residual_fn(pp);
      const Vec rm = residual_fn(pm);
      Jac.col(j) = (rp - rm) / (2.0 * h);
    }
    if (!Jac.allFinite())
      throw NumericalError("fit_nonlinear: Jacobian not finite");
    const Mat H = Jac.transpose() * Jac;
    const Vec g = Jac.transpose() * r;

    bool accepted = false;
    while (!accepted) {
      Mat damped = H;
      damped.diagonal() += lambda * (H.diagonal().array() + 1e-30).matrix();
      const Vec step = damped.ldlt().solve(-g);
      if (!step.allFinite())
        throw NumericalError("fit_nonlinear: singular normal matrix");
      const Vec p_try = clip(p + step);
      const Vec r_try = residual_fn(p_try);
      const double cost_try = r_try.allFinite()
                                  ? r_try.squaredNorm()
                                  : std::numeric_limits<double>::infinity();
      if (cost_try < cost) {
        const double rel_step = (p_try - p).norm() / (p.norm() + 1e-30);
        const double rel_drop = (cost - cost_try) / std::max(cost, 1e-300);
        p = p_try;
        r = r_try;
        cost = cost_try;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        if (rel_step < opts.step_tol || rel_drop < opts.cost_tol || cost == 0.0)
          converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e12) {
          // Damping exhausted: gradient is numerically zero here. Report the
          // point as a converged local minimum rather than failing.
          converged = true;
          accepted = true;
        }
      }
    }
  }

  FitResult out;
  out.parameters = p;
  out.n_points = static_cast<int>(nr);
  out.residual_rms = std::sqrt(cost / static_cast<double>(nr));
  out.converged = converged;
  const double dof = static_cast<double>(nr - np);
  const double s2 = dof > 0 ? cost / dof : 0.0;
  Mat H = Jac.transpose() * Jac;
  Mat cov = H.ldlt().solve(Mat::Identity(np, np)) * s2;
  out.covariance = cov.allFinite() ? cov : Mat::Zero(np, np);
  return out;
}

}  // namespace casimir
