#include "casimir/piezo.hpp"

#include "casimir/constants.hpp"
#include "casimir/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace casimir {

namespace {

constexpr int kNParams = 9;  // (I0, I1, g, delta, C0..C4) in the u-basis

// Fringe model in the normalized basis: u = Vp/vmax, envelope tilt g =
// gamma*vmax, extension(u) = sum_k C_k u^(k+1) with C_k = K_k vmax^(k+1).
// The C_k all land within a few decades of each other, which keeps the
// finite-difference Jacobian well conditioned (the raw K4 is ~1e-9 nm/V^4
// and would vanish under a relative step).
double branch_model(const Vec& th, double u) {
  const double ext = ((((th[8] * u + th[7]) * u + th[6]) * u + th[5]) * u + th[4]) * u;
  const double phase = 4.0 * kPi * (ext + th[3]) / kLaserWavelengthNm;
  return th[0] + 0.5 * th[1] * (1.0 - th[2] * u) * (1.0 + std::cos(phase));
}

// Runs one warm-up stage: fits only the `active` subset of theta, holding the
// rest fixed, and writes the refined values back into theta.
FitResult run_stage(const std::vector<double>& u, const std::vector<double>& inten,
                    Vec& theta, const std::vector<int>& active, const Vec& lo,
                    const Vec& hi, const Vec& scale, int max_iterations) {
  const int m = static_cast<int>(active.size());
  const int n = static_cast<int>(u.size());
  Vec sub(m), slo(m), shi(m), sscale(m);
  for (int j = 0; j < m; ++j) {
    sub[j] = theta[active[j]];
    slo[j] = lo[active[j]];
    shi[j] = hi[active[j]];
    sscale[j] = scale[active[j]];
  }
  auto residual = [&](const Vec& p) {
    Vec full = theta;
    for (int j = 0; j < m; ++j) full[active[j]] = p[j];
    Vec r(n);
    for (int i = 0; i < n; ++i) r[i] = branch_model(full, u[i]) - inten[i];
    return r;
  };
  NonlinearOptions opt;
  opt.lower_bounds = slo;
  opt.upper_bounds = shi;
  opt.parameter_scale = sscale;
  opt.max_iterations = max_iterations;
  FitResult fr = fit_nonlinear(residual, sub, opt);
  for (int j = 0; j < m; ++j) theta[active[j]] = fr.parameters[j];
  return fr;
}

}  // namespace

std::pair<FringeRecord, FringeRecord> split_branches(const FringeRecord& record) {
  const int n = static_cast<int>(record.piezo_voltage.size());
  if (static_cast<int>(record.time_s.size()) != n ||
      static_cast<int>(record.intensity.size()) != n) {
    throw ValidationError("fringe record arrays have mismatched lengths");
  }
  if (n < 4) throw ValidationError("fringe record too short to split");

  const std::vector<double>& vp = record.piezo_voltage;
  std::vector<int> label(n, 0);
  for (int i = 0; i + 1 < n; ++i) {
    const double d = vp[i + 1] - vp[i];
    label[i] = (d > 0.0) - (d < 0.0);
  }
  label[n - 1] = label[n - 2];

  // 3-sample majority vote absorbs a single spurious reversal.
  std::vector<int> filt = label;
  for (int i = 1; i + 1 < n; ++i) {
    const int s = label[i - 1] + label[i] + label[i + 1];
    filt[i] = (s > 0) - (s < 0);
    if (filt[i] == 0) filt[i] = label[i];
  }
  // Flat stretches (repeated Vp) inherit the neighboring direction.
  int last = 0;
  for (int i = 0; i < n; ++i) {
    if (filt[i] != 0) last = filt[i];
    else filt[i] = last;
  }
  last = 0;
  for (int i = n - 1; i >= 0; --i) {
    if (filt[i] != 0) last = filt[i];
    else filt[i] = last;
  }

  FringeRecord rising, falling;
  for (int i = 0; i < n; ++i) {
    FringeRecord& dst = (filt[i] > 0) ? rising : falling;
    if (filt[i] == 0) continue;
    dst.time_s.push_back(record.time_s[i]);
    dst.piezo_voltage.push_back(vp[i]);
    dst.intensity.push_back(record.intensity[i]);
  }
  if (rising.piezo_voltage.empty() || falling.piezo_voltage.empty()) {
    throw ValidationError(
        "fringe record covers less than one full period of the drive wave");
  }
  return {rising, falling};
}

int count_fringes(const std::vector<double>& intensity) {
  if (intensity.size() < 3) return 0;
  const auto [mn, mx] = std::minmax_element(intensity.begin(), intensity.end());
  const double span = *mx - *mn;
  if (span <= 0.0) return 0;
  const double lo = *mn + 0.4 * span;
  const double hi = *mn + 0.6 * span;
  int state = 0;  // +1 above band, -1 below, 0 not yet decided
  int crossings = 0;
  for (const double v : intensity) {
    if (v >= hi) {
      if (state == -1) ++crossings;
      state = +1;
    } else if (v <= lo) {
      if (state == +1) ++crossings;
      state = -1;
    }
  }
  return crossings / 2;
}

PiezoBranchFit fit_piezo_branch(const FringeRecord& segment) {
  const int n = static_cast<int>(segment.piezo_voltage.size());
  if (n != static_cast<int>(segment.intensity.size())) {
    throw ValidationError("fringe segment arrays have mismatched lengths");
  }
  if (n < 10) throw ValidationError("fringe segment too short to fit");

  const int fringes = count_fringes(segment.intensity);
  if (fringes < 5) {
    throw ValidationError(
        "fringe segment spans fewer than 5 fringes; higher-order piezo "
        "coefficients are unidentifiable");
  }

  double vlo = segment.piezo_voltage[0];
  double vhi = vlo;
  for (const double v : segment.piezo_voltage) {
    vlo = std::min(vlo, v);
    vhi = std::max(vhi, v);
  }
  const double vmax = std::max(std::abs(vlo), std::abs(vhi));
  if (vmax <= 0.0) throw ValidationError("fringe segment has no voltage sweep");

  std::vector<double> u(n);
  for (int i = 0; i < n; ++i) u[i] = segment.piezo_voltage[i] / vmax;

  const auto [imn, imx] =
      std::minmax_element(segment.intensity.begin(), segment.intensity.end());
  const double half = kLaserWavelengthNm / 2.0;
  const double I0g = *imn;
  const double I1g = *imx - *imn;
  const double C0g = fringes * half;

  const double inf = std::numeric_limits<double>::infinity();
  Vec lo(kNParams), hi(kNParams), scale(kNParams);
  lo << 0.0, 0.0, -0.5, -700.0, 100.0, -3000.0, -3000.0, -3000.0, -3000.0;
  hi << inf, inf, 0.5, 700.0, 2.0e4, 3000.0, 3000.0, 3000.0, 3000.0;
  scale << std::max(I0g, 0.1), std::max(I1g, 0.1), 0.05, 100.0,
      std::max(C0g, 500.0), 300.0, 300.0, 300.0, 300.0;

  // Stage A: phase and scale only, retried at +-1 fringe in case the counter
  // missed or double-counted an oscillation near the ends.
  const std::vector<int> stage_a = {0, 1, 3, 4};
  double best_rms = inf;
  Vec theta(kNParams);
  for (const double dc : {0.0, half, -half}) {
    if (C0g + dc < lo[4]) continue;
    Vec th(kNParams);
    th << I0g, I1g, 0.0, 0.0, C0g + dc, 0.0, 0.0, 0.0, 0.0;
    const FitResult fr =
        run_stage(u, segment.intensity, th, stage_a, lo, hi, scale, 80);
    if (fr.residual_rms < best_rms) {
      best_rms = fr.residual_rms;
      theta = th;
    }
  }

  run_stage(u, segment.intensity, theta, {0, 1, 2, 3, 4, 5}, lo, hi, scale, 120);
  run_stage(u, segment.intensity, theta, {0, 1, 2, 3, 4, 5, 6}, lo, hi, scale, 150);
  const std::vector<int> all = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  const FitResult final_fit =
      run_stage(u, segment.intensity, theta, all, lo, hi, scale, 500);

  PiezoBranchFit out;
  double vpow = vmax;
  for (int k = 0; k < 5; ++k) {
    out.K[k] = theta[4 + k] / vpow;
    vpow *= vmax;
  }
  out.I0 = theta[0];
  out.I1 = theta[1];
  out.gamma_per_V = theta[2] / vmax;
  out.delta_nm = std::fmod(theta[3], half);
  if (out.delta_nm < 0.0) out.delta_nm += half;
  out.vmin_v = vlo;
  out.vmax_v = vhi;
  out.fit = final_fit;

  if (!final_fit.converged) {
    throw CalibrationError("piezo branch fit did not converge", out);
  }
  return out;
}

PiezoCalibration calibrate_piezo(const FringeRecord& record) {
  const auto [rising, falling] = split_branches(record);
  PiezoCalibration cal;
  cal.rising = fit_piezo_branch(rising);
  cal.falling = fit_piezo_branch(falling);
  return cal;
}

ExtensionValue extension_from_voltage(const PiezoCalibration& cal, double vp,
                                      Branch branch) {
  const PiezoBranchFit& f = (branch == Branch::kRising) ? cal.rising : cal.falling;
  const double kv =
      (((f.K[4] * vp + f.K[3]) * vp + f.K[2]) * vp + f.K[1]) * vp + f.K[0];
  ExtensionValue out;
  out.d_nm = kv * vp;
  out.extrapolated = (vp < f.vmin_v - 1e-9) || (vp > f.vmax_v + 1e-9);
  return out;
}

}  // namespace casimir
