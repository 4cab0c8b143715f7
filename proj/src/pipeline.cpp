#include "casimir/pipeline.hpp"

#include "casimir/fit.hpp"
#include "casimir/physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

namespace casimir {

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
  return 0.5 * (hi + v[mid - 1]);
}

// np.interp-style clamped linear interpolation; x ascending.
double interp1(const std::vector<double>& x, const std::vector<double>& y,
               double q) {
  if (q <= x.front()) return y.front();
  if (q >= x.back()) return y.back();
  const auto it = std::upper_bound(x.begin(), x.end(), q);
  const size_t j = static_cast<size_t>(it - x.begin());
  const double t = (q - x[j - 1]) / (x[j] - x[j - 1]);
  return y[j - 1] + t * (y[j] - y[j - 1]);
}

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

DeflectionTrace to_extension_domain(const Trace& trace,
                                    const std::array<double, 5>& K) {
  DeflectionTrace out;
  out.plate_voltage = trace.plate_voltage;
  out.sequence_index = trace.sequence_index;
  out.d_nm.reserve(trace.samples.size());
  out.s_def.reserve(trace.samples.size());
  for (const TraceSample& s : trace.samples) {
    const double v = s.piezo_voltage;
    const double kv = (((K[4] * v + K[3]) * v + K[2]) * v + K[1]) * v + K[0];
    out.d_nm.push_back(kv * v);
    out.s_def.push_back(s.s_def);
  }
  return out;
}

ScatteredBaseline fit_scattered_baseline(const DeflectionTrace& trace,
                                         double far_fraction) {
  const int n = static_cast<int>(trace.d_nm.size());
  const int n_far = static_cast<int>(n * far_fraction);
  if (n_far < 100) {
    throw ValidationError(
        "scattered-light far region holds fewer than 100 samples");
  }
  Vec d(n_far), s(n_far);
  for (int i = 0; i < n_far; ++i) {
    d[i] = trace.d_nm[i];
    s[i] = trace.s_def[i];
  }
  const FitResult line = fit_line(d, s);
  ScatteredBaseline b;
  b.slope_per_nm = line.parameters[0];
  b.offset = line.parameters[1];
  b.n_samples = n_far;
  return b;
}

DeflectionTrace apply_baseline(const DeflectionTrace& trace,
                               const ScatteredBaseline& baseline) {
  DeflectionTrace out = trace;
  for (size_t i = 0; i < out.s_def.size(); ++i) {
    out.s_def[i] -= baseline.offset + baseline.slope_per_nm * out.d_nm[i];
  }
  return out;
}

DeflectionTrace subtract_scattered_light(const DeflectionTrace& trace,
                                         double far_fraction) {
  return apply_baseline(trace, fit_scattered_baseline(trace, far_fraction));
}

ContactEvent locate_contact(const DeflectionTrace& trace) {
  const int n = static_cast<int>(trace.s_def.size());
  if (n < 8) throw ValidationError("trace too short to locate a contact");
  const std::vector<double>& d = trace.d_nm;
  const std::vector<double>& s = trace.s_def;

  std::vector<double> diffs(n - 1);
  for (int i = 0; i + 1 < n; ++i) diffs[i] = s[i + 1] - s[i];

  // Noise scale from the first half of the sweep (guaranteed pre-contact):
  // MAD of the forward differences, de-inflated by sqrt(2) because a
  // difference of two independent samples carries twice the variance.
  std::vector<double> half(diffs.begin(), diffs.begin() + (n - 1) / 2);
  const double med = median_of(half);
  for (double& v : half) v = std::abs(v - med);
  const double sigma_hat = median_of(half) * 1.4826 / std::sqrt(2.0);
  double s_absmax = 0.0;
  for (const double v : s) s_absmax = std::max(s_absmax, std::abs(v));
  const double theta = 10.0 * std::max(sigma_hat, 1e-9 * std::max(1.0, s_absmax));

  int idx = -1;
  for (int j = 2; j + 2 < n - 1; ++j) {
    if (diffs[j] > theta && diffs[j + 1] > theta && diffs[j + 2] > theta) {
      idx = j;
      break;
    }
  }
  if (idx < 0) throw ValidationError("no contact detected in trace");

  // W, X: last two samples before the rise onset; Y: the onset sample.
  const int W = idx - 2, X = idx - 1, Y = idx;
  const double dW = d[W], dX = d[X], dY = d[Y];
  const double sW = s[W], sX = s[X], sY = s[Y];

  ContactEvent ev;
  ev.trace_index = trace.sequence_index;
  ev.s_def_at_contact = sY;
  ev.x_index = X;
  if (sW == sX) {
    ev.d_c_nm = 0.5 * (dX + dY);
    ev.flagged = true;
    return ev;
  }
  ev.d_c_nm = dX - (dW - dX) * (sX - sY) / (sW - sX);
  ev.flagged = !(std::min(dX, dY) <= ev.d_c_nm && ev.d_c_nm <= std::max(dX, dY));
  return ev;
}

DriftEstimate estimate_drift(const std::vector<ContactEvent>& contacts) {
  const int N = static_cast<int>(contacts.size());
  if (N < 8) throw ValidationError("drift estimation needs at least 8 contacts");

  std::vector<double> ests;
  for (int i = 1; i <= 5; ++i) {
    const int j = N - i + 1;
    if (j <= i + 1) continue;  // no elapsed gap, or projected point inside pair
    const ContactEvent& a = contacts[i - 1];
    const ContactEvent& b = contacts[i];
    const ContactEvent& c = contacts[j - 1];
    if (b.s_def_at_contact == a.s_def_at_contact) continue;
    const double slope = (b.d_c_nm - a.d_c_nm) /
                         (b.s_def_at_contact - a.s_def_at_contact);
    const double d_expected =
        a.d_c_nm + slope * (c.s_def_at_contact - a.s_def_at_contact);
    ests.push_back((d_expected - c.d_c_nm) / static_cast<double>(j - i));
  }
  if (ests.size() < 3) {
    throw NumericalError("drift estimation failed: fewer than 3 usable point sets");
  }
  DriftEstimate out;
  out.n_estimates = static_cast<int>(ests.size());
  out.drift_per_interval_nm =
      std::accumulate(ests.begin(), ests.end(), 0.0) / ests.size();
  double ss = 0.0;
  for (const double e : ests) {
    ss += (e - out.drift_per_interval_nm) * (e - out.drift_per_interval_nm);
  }
  out.spread_nm = std::sqrt(ss / (ests.size() - 1));
  return out;
}

std::vector<ContactEvent> correct_contacts(const std::vector<ContactEvent>& contacts,
                                           const DriftEstimate& drift) {
  std::vector<ContactEvent> out = contacts;
  for (size_t k = 0; k < out.size(); ++k) {
    out[k].d_c_nm += static_cast<double>(k) * drift.drift_per_interval_nm;
  }
  return out;
}

ValueWithSigma extract_m(const std::vector<ContactEvent>& corrected) {
  if (corrected.size() < 3) {
    throw ValidationError("deflection coefficient needs at least 3 contacts");
  }
  Vec s(corrected.size()), d(corrected.size());
  for (size_t i = 0; i < corrected.size(); ++i) {
    s[static_cast<Eigen::Index>(i)] = corrected[i].s_def_at_contact;
    d[static_cast<Eigen::Index>(i)] = corrected[i].d_c_nm;
  }
  const FitResult line = fit_line(s, d);
  return {std::abs(line.parameters[0]), std::sqrt(line.covariance(0, 0))};
}

std::vector<ParabolaSample> build_parabola_samples(
    const std::vector<DeflectionTrace>& traces,
    const std::vector<ContactEvent>& corrected, double m) {
  const int nt = static_cast<int>(traces.size());
  if (nt < 5) throw ValidationError("parabola extraction needs at least 5 traces");
  if (corrected.size() != traces.size()) {
    throw ValidationError("traces and contacts are not aligned");
  }

  // One shared deflection-free datum: dc0 = mean(d_c - m * s_c).
  double dc0 = 0.0;
  for (const ContactEvent& c : corrected) dc0 += c.d_c_nm - m * c.s_def_at_contact;
  dc0 /= nt;

  // Pre-contact samples of each trace mapped to provisional separation
  // (z0 = 0), reversed so z ascends.
  std::vector<std::vector<double>> zs(nt), ss(nt);
  for (int k = 0; k < nt; ++k) {
    const DeflectionTrace& t = traces[k];
    const int x = corrected[k].x_index;
    if (x < 1 || x >= static_cast<int>(t.d_nm.size())) {
      throw ValidationError("contact index outside its trace");
    }
    zs[k].reserve(x + 1);
    ss[k].reserve(x + 1);
    for (int i = x; i >= 0; --i) {
      zs[k].push_back(dc0 - t.d_nm[i] + m * t.s_def[i]);
      ss[k].push_back(t.s_def[i]);
    }
  }

  std::vector<double> dzs(zs[0].size() - 1);
  for (size_t i = 0; i + 1 < zs[0].size(); ++i) {
    dzs[i] = std::abs(zs[0][i + 1] - zs[0][i]);
  }
  const double dz = median_of(dzs);
  if (!(dz > 0.0)) throw NumericalError("degenerate separation grid spacing");

  double hi = 6000.0;
  for (const std::vector<double>& z : zs) hi = std::min(hi, z.back());
  const double lo = 60.0;
  if (hi <= lo) throw ValidationError("traces do not reach the parabola grid range");

  // Shared design matrix over plate voltages: columns V^2, V, 1.
  Mat A(nt, 3);
  for (int k = 0; k < nt; ++k) {
    const double v = traces[k].plate_voltage;
    A(k, 0) = v * v;
    A(k, 1) = v;
    A(k, 2) = 1.0;
  }
  const Eigen::ColPivHouseholderQR<Mat> qr(A);
  if (qr.rank() < 3) {
    throw NumericalError("plate voltages do not span a parabola");
  }
  const Mat ata_inv = (A.transpose() * A).inverse();
  const int dof = nt - 3;

  std::vector<ParabolaSample> rows;
  Vec y(nt);
  for (double z = lo; z < hi; z += dz) {
    bool covered = true;
    for (int k = 0; k < nt; ++k) {
      if (z < zs[k].front() || z > zs[k].back()) {
        covered = false;
        break;
      }
      y[k] = interp1(zs[k], ss[k], z);
    }
    if (!covered) continue;

    const Vec coef = qr.solve(y);
    const double a = coef[0], b = coef[1], c = coef[2];
    if (a == 0.0) continue;
    const Vec resid = y - A * coef;
    const double s2 = dof > 0 ? resid.squaredNorm() / dof : 0.0;

    ParabolaSample row;
    row.z_grid_nm = z;
    row.beta = a;
    row.V0 = -b / (2.0 * a);
    row.S0 = c - b * b / (4.0 * a);
    Vec gV0(3), gS0(3);
    gV0 << b / (2.0 * a * a), -1.0 / (2.0 * a), 0.0;
    gS0 << b * b / (4.0 * a * a), -b / (2.0 * a), 1.0;
    row.V0_uncertainty = std::sqrt(std::max(0.0, s2 * gV0.dot(ata_inv * gV0)));
    row.S0_uncertainty = std::sqrt(std::max(0.0, s2 * gS0.dot(ata_inv * gS0)));
    rows.push_back(row);
  }
  if (rows.empty()) throw NumericalError("no parabola grid point had full coverage");
  return rows;
}

V0Aggregate aggregate_V0(const std::vector<ParabolaSample>& samples,
                         double trend_threshold_V) {
  const int n = static_cast<int>(samples.size());
  if (n < 10) throw ValidationError("V0 aggregation needs at least 10 samples");

  V0Aggregate out;
  double mean = 0.0;
  for (const ParabolaSample& s : samples) mean += s.V0;
  mean /= n;
  double ss = 0.0;
  for (const ParabolaSample& s : samples) ss += (s.V0 - mean) * (s.V0 - mean);
  out.V0 = mean;
  out.uncertainty = std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n));

  // Constancy: adjacent rows share interpolation noise, which inflates a
  // raw-row slope significance; test the trend on ~20 bin means instead.
  const double z_first = samples.front().z_grid_nm;
  const double z_last = samples.back().z_grid_nm;
  const int n_bins = 20;
  const double width = (z_last + 1e-9 - z_first) / n_bins;
  std::vector<double> bz(n_bins, 0.0), bv(n_bins, 0.0);
  std::vector<int> bc(n_bins, 0);
  for (const ParabolaSample& s : samples) {
    int b = static_cast<int>((s.z_grid_nm - z_first) / width);
    b = std::clamp(b, 0, n_bins - 1);
    bz[b] += s.z_grid_nm;
    bv[b] += s.V0;
    ++bc[b];
  }
  std::vector<double> bx, by;
  for (int b = 0; b < n_bins; ++b) {
    if (bc[b] >= 2) {
      bx.push_back(bz[b] / bc[b]);
      by.push_back(bv[b] / bc[b]);
    }
  }
  double slope = 0.0, slope_sigma = 0.0;
  if (bx.size() >= 3) {
    const FitResult line = fit_line(to_vec(bx), to_vec(by));
    slope = line.parameters[0];
    slope_sigma = std::sqrt(line.covariance(0, 0));
  } else {
    Vec zx(n), vy(n);
    for (int i = 0; i < n; ++i) {
      zx[i] = samples[i].z_grid_nm;
      vy[i] = samples[i].V0;
    }
    const FitResult line = fit_line(zx, vy);
    slope = line.parameters[0];
    slope_sigma = std::sqrt(line.covariance(0, 0));
  }
  out.trend_V = std::abs(slope) * (z_last - z_first);
  if (slope == 0.0) {
    out.trend_sig = 0.0;
  } else if (slope_sigma > 0.0) {
    out.trend_sig = std::abs(slope) / slope_sigma;
  } else {
    out.trend_sig = std::numeric_limits<double>::infinity();
  }
  out.constancy_pass = !(out.trend_sig > 2.0 && out.trend_V > trend_threshold_V);
  return out;
}

namespace {

// Closed-form k' with z0 fixed: beta = X/k' is linear in 1/k'.
double fit_kprime_once(const std::vector<double>& zc, const std::vector<double>& beta,
                       double R_um) {
  double sxb = 0.0, sxx = 0.0;
  for (size_t i = 0; i < zc.size(); ++i) {
    const double X = electrostatic_X(zc[i], R_um);
    sxb += X * beta[i];
    sxx += X * X;
  }
  return sxx / sxb;  // 1/k' = sxb/sxx
}

// One-parameter Gauss-Newton for z0 with k' fixed.
double fit_z0_once(const std::vector<double>& zg, const std::vector<double>& beta,
                   double kp, double z0_init, double R_um) {
  double z0 = z0_init;
  for (int it = 0; it < 60; ++it) {
    const double h = 1e-6 * std::max(std::abs(z0), 1.0);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < zg.size(); ++i) {
      const double zc = zg[i] + z0;
      const double r = beta[i] - electrostatic_X(zc, R_um) / kp;
      const double rp =
          (electrostatic_X(zc + h, R_um) - electrostatic_X(zc - h, R_um)) /
          (2.0 * h) / kp;
      num += rp * r;
      den += rp * rp;
    }
    const double step = num / den;
    z0 += step;
    if (!std::isfinite(z0)) return z0;
    if (std::abs(step) < 1e-12) break;
  }
  return z0;
}

// One full start-point scan at a fixed separation offset z0: closed-form k'
// per start over [start, end], then a per-start z0 refinement at the mean k'.
// kp_mean averages every start whose k' fit succeeded; the parallel arrays
// keep only starts whose z0 refinement also stayed sane.
struct StartScan {
  std::vector<double> starts, kps, z0s;
  double kp_mean = 0.0, z0_mean = 0.0;
};

StartScan run_start_scan(const std::vector<double>& zg,
                         const std::vector<double>& beta, double z0, double R_um,
                         const IterateOptions& opt) {
  const int n = static_cast<int>(zg.size());
  std::vector<std::vector<int>> masks;
  std::vector<double> pass_starts, pass_kps;
  for (double st = opt.start_min_nm; st <= opt.start_max_nm + 1e-9;
       st += opt.start_step_nm) {
    std::vector<int> mask;
    for (int i = 0; i < n; ++i) {
      const double z = zg[i] + z0;
      if (z >= st && z <= opt.end_nm) mask.push_back(i);
    }
    if (mask.size() < 10) continue;
    std::vector<double> zc(mask.size()), bm(mask.size());
    for (size_t j = 0; j < mask.size(); ++j) {
      zc[j] = zg[mask[j]] + z0;
      bm[j] = beta[mask[j]];
    }
    const double kp_s = fit_kprime_once(zc, bm, R_um);
    if (!std::isfinite(kp_s) || kp_s <= 0.0) continue;
    masks.push_back(std::move(mask));
    pass_starts.push_back(st);
    pass_kps.push_back(kp_s);
  }
  if (static_cast<int>(pass_kps.size()) < opt.min_surviving_starts) {
    throw NumericalError("k' scan degenerate: too few start points survived");
  }
  StartScan out;
  out.kp_mean = std::accumulate(pass_kps.begin(), pass_kps.end(), 0.0) /
                pass_kps.size();

  for (size_t q = 0; q < masks.size(); ++q) {
    std::vector<double> zm(masks[q].size()), bm(masks[q].size());
    for (size_t j = 0; j < masks[q].size(); ++j) {
      zm[j] = zg[masks[q][j]];
      bm[j] = beta[masks[q][j]];
    }
    const double z0_s = fit_z0_once(zm, bm, out.kp_mean, z0, R_um);
    if (!std::isfinite(z0_s) || std::abs(z0_s) > 1000.0) continue;
    out.starts.push_back(pass_starts[q]);
    out.kps.push_back(pass_kps[q]);
    out.z0s.push_back(z0_s);
  }
  if (static_cast<int>(out.z0s.size()) < opt.min_surviving_starts) {
    throw NumericalError("z0 scan degenerate: too few start points survived");
  }
  out.z0_mean =
      std::accumulate(out.z0s.begin(), out.z0s.end(), 0.0) / out.z0s.size();
  return out;
}

void check_scan_inputs(const std::vector<ParabolaSample>& samples, double z0,
                       const IterateOptions& opt, std::vector<double>& zg,
                       std::vector<double>& beta) {
  const int n = static_cast<int>(samples.size());
  if (n < 50) throw ValidationError("k'/z0 iteration needs a dense separation grid");
  zg.resize(n);
  beta.resize(n);
  for (int i = 0; i < n; ++i) {
    zg[i] = samples[i].z_grid_nm;
    beta[i] = samples[i].beta;
  }
  if (zg.back() + z0 < opt.end_nm || zg.front() + z0 > opt.start_max_nm) {
    throw ValidationError("parabola grid does not cover the fit window");
  }
}

}  // namespace

ScanDiagnostic scan_k_prime(const std::vector<ParabolaSample>& samples,
                            const SphereGeometry& geom, double z0_nm,
                            const IterateOptions& opt) {
  std::vector<double> zg, beta;
  check_scan_inputs(samples, z0_nm, opt, zg, beta);
  const StartScan scan = run_start_scan(zg, beta, z0_nm, geom.radius_um, opt);

  ScanDiagnostic d;
  d.start_nm = to_vec(scan.starts);
  d.k_prime = to_vec(scan.kps);
  d.z0_nm = to_vec(scan.z0s);
  const FitResult line = fit_line(d.start_nm, d.k_prime);
  const double slope = line.parameters[0];
  const double slope_sigma = std::sqrt(line.covariance(0, 0));
  d.k_slope_per_nm = slope;
  if (slope == 0.0) {
    d.k_slope_sig = 0.0;
  } else if (slope_sigma > 0.0) {
    d.k_slope_sig = std::abs(slope) / slope_sigma;
  } else {
    d.k_slope_sig = std::numeric_limits<double>::infinity();
  }
  d.relative_trend =
      std::abs(slope) * (opt.start_max_nm - opt.start_min_nm) / scan.kp_mean;
  d.pass = d.relative_trend < opt.scan_trend_threshold;
  return d;
}

CalibrationResult iterate_k_z0(const std::vector<ParabolaSample>& samples,
                               const ValueWithSigma& m, const SphereGeometry& geom,
                               double z0_guess_nm, const IterateOptions& opt) {
  std::vector<double> zg, beta;
  check_scan_inputs(samples, z0_guess_nm, opt, zg, beta);
  const double R = geom.radius_um;
  const int n = static_cast<int>(zg.size());

  // Conservative initial k' from a mid-range window at the guessed z0.
  double kp;
  {
    std::vector<double> zc, bm;
    for (int i = 0; i < n; ++i) {
      const double z = zg[i] + z0_guess_nm;
      if (z >= 200.0 && z <= opt.end_nm) {
        zc.push_back(z);
        bm.push_back(beta[i]);
      }
    }
    if (zc.size() < 10) throw ValidationError("parabola grid does not cover the fit window");
    kp = fit_kprime_once(zc, bm, R);
  }
  double z0 = z0_guess_nm;

  std::vector<std::pair<double, double>> trajectory;
  int cycles = 0;
  bool converged = false;
  while (cycles < opt.max_cycles) {
    ++cycles;
    const StartScan scan = run_start_scan(zg, beta, z0, R, opt);
    const double dk = std::abs(scan.kp_mean - kp) / std::abs(scan.kp_mean);
    const double dz = std::abs(scan.z0_mean - z0);
    kp = scan.kp_mean;
    z0 = scan.z0_mean;
    trajectory.emplace_back(kp, z0);
    if (cycles >= 2 && dk < opt.k_tol_rel && dz < opt.z0_tol_nm) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "k'/z0 iteration did not converge in " << opt.max_cycles
        << " cycles; trajectory:";
    for (const auto& [kpv, z0v] : trajectory) msg << " (" << kpv << ", " << z0v << ")";
    throw NumericalError(msg.str());
  }

  CalibrationResult out;
  out.m = m.value;
  out.m_uncertainty = m.sigma;
  out.k_prime = kp;
  out.z0_nm = z0;
  out.iterations = cycles;

  // Final diagnostic scan at the converged offset; the spread of the per-start
  // estimates doubles as the scan-derived uncertainty of k' and z0.
  out.scan = scan_k_prime(samples, geom, z0, opt);
  const Eigen::Index ns = out.scan.k_prime.size();
  const double kmean = out.scan.k_prime.mean();
  const double zmean = out.scan.z0_nm.mean();
  out.k_prime_uncertainty = std::sqrt(
      (out.scan.k_prime.array() - kmean).square().sum() / double(ns - 1));
  out.z0_uncertainty_nm = std::sqrt(
      (out.scan.z0_nm.array() - zmean).square().sum() / double(ns - 1));

  out.k = out.k_prime / out.m * 1e9;
  const double rk = out.k_prime_uncertainty / out.k_prime;
  const double rm = m.value > 0 ? m.sigma / m.value : 0.0;
  out.k_uncertainty = out.k * std::sqrt(rk * rk + rm * rm);
  return out;
}

std::vector<ForcePoint> extract_casimir(const std::vector<ParabolaSample>& samples,
                                        double k_prime, double z0_nm) {
  std::vector<ForcePoint> out;
  out.reserve(samples.size());
  for (const ParabolaSample& s : samples) {
    out.push_back({s.z_grid_nm + z0_nm, s.S0 * k_prime, s.S0_uncertainty * k_prime});
  }
  return out;
}

MethodComparison compare_casimir_methods(
    const std::vector<ParabolaSample>& samples, const DeflectionTrace& compensated,
    const ValueWithSigma& m, double k_prime, double z0_nm, double window_lo_nm,
    double window_hi_nm, double slope_hi_nm) {
  const ContactEvent ev = locate_contact(compensated);
  const double dc0 = ev.d_c_nm - m.value * ev.s_def_at_contact;

  std::vector<double> zz, sscomp;
  zz.reserve(ev.x_index + 1);
  sscomp.reserve(ev.x_index + 1);
  for (int i = ev.x_index; i >= 0; --i) {
    zz.push_back(dc0 - compensated.d_nm[i] + m.value * compensated.s_def[i] + z0_nm);
    sscomp.push_back(compensated.s_def[i]);
  }

  MethodComparison out;
  for (const ParabolaSample& s : samples) {
    const double z = s.z_grid_nm + z0_nm;
    if (z < window_lo_nm || z > window_hi_nm) continue;
    if (z < zz.front() || z > zz.back()) continue;
    out.z_nm.push_back(z);
    out.F_offset_N.push_back(s.S0 * k_prime);
    out.F_direct_N.push_back(interp1(zz, sscomp, z) * k_prime);
    out.sigma_N.push_back(s.S0_uncertainty * k_prime);  // parabola half, for now
  }
  if (out.z_nm.empty()) {
    throw ValidationError("force grids do not overlap in the comparison window");
  }

  // Direct-method noise floor: residual scatter of the far region about its
  // own line.
  const int n_far = static_cast<int>(compensated.d_nm.size()) / 5;
  double sigma_comp = 0.0;
  if (n_far >= 3) {
    Vec fd(n_far), fs(n_far);
    for (int i = 0; i < n_far; ++i) {
      fd[i] = compensated.d_nm[i];
      fs[i] = compensated.s_def[i];
    }
    const FitResult line = fit_line(fd, fs);
    std::vector<double> res(n_far);
    for (int i = 0; i < n_far; ++i) {
      res[i] = fs[i] - (line.parameters[0] * fd[i] + line.parameters[1]);
    }
    const double rmed = median_of(res);
    for (double& r : res) r = std::abs(r - rmed);
    sigma_comp = median_of(res) * 1.4826;
  }
  out.direct_noise_signal = sigma_comp;

  const double sig_direct_N = sigma_comp * k_prime;
  int n_overlap = 0;
  for (size_t i = 0; i < out.z_nm.size(); ++i) {
    out.sigma_N[i] = std::hypot(out.sigma_N[i], sig_direct_N);
    const double diff = std::abs(out.F_offset_N[i] - out.F_direct_N[i]);
    out.max_abs_diff_N = std::max(out.max_abs_diff_N, diff);
    if (out.F_direct_N[i] != 0.0) {
      out.max_rel_diff =
          std::max(out.max_rel_diff, std::abs(diff / out.F_direct_N[i]));
    }
    if (diff <= 2.0 * out.sigma_N[i]) ++n_overlap;
  }
  out.overlap_fraction = static_cast<double>(n_overlap) / out.z_nm.size();
  out.pass = out.overlap_fraction >= 0.95;

  // Scaling check: weighted log-log slope of the offset-method force over
  // [window_lo, slope_hi], attractive points only.
  double sig_max = 0.0;
  for (size_t i = 0; i < out.z_nm.size(); ++i) sig_max = std::max(sig_max, out.sigma_N[i]);
  std::vector<double> lx, ly, lw;
  for (size_t i = 0; i < out.z_nm.size(); ++i) {
    if (out.z_nm[i] > slope_hi_nm || out.F_offset_N[i] >= 0.0) continue;
    lx.push_back(std::log(out.z_nm[i]));
    ly.push_back(std::log(-out.F_offset_N[i]));
    if (sig_max > 0.0) {
      const double sf = std::max(out.sigma_N[i], sig_max * 1e-6);
      lw.push_back((out.F_offset_N[i] / sf) * (out.F_offset_N[i] / sf));
    } else {
      lw.push_back(1.0);
    }
  }
  if (lx.size() >= 3) {
    double W = 0.0, xb = 0.0, yb = 0.0;
    for (size_t i = 0; i < lx.size(); ++i) {
      W += lw[i];
      xb += lw[i] * lx[i];
      yb += lw[i] * ly[i];
    }
    xb /= W;
    yb /= W;
    double sxy = 0.0, sxx = 0.0;
    for (size_t i = 0; i < lx.size(); ++i) {
      sxy += lw[i] * (lx[i] - xb) * (ly[i] - yb);
      sxx += lw[i] * (lx[i] - xb) * (lx[i] - xb);
    }
    out.loglog_slope = sxy / sxx;
  }
  return out;
}

PipelineResult analyze_traces(const std::vector<DeflectionTrace>& voltage_traces,
                              const DeflectionTrace& compensated,
                              const PipelineOptions& opt) {
  std::vector<DeflectionTrace> traces = voltage_traces;
  std::stable_sort(traces.begin(), traces.end(),
                   [](const DeflectionTrace& a, const DeflectionTrace& b) {
                     return a.sequence_index < b.sequence_index;
                   });

  PipelineResult out;
  out.baseline = fit_scattered_baseline(compensated, opt.far_fraction);
  const DeflectionTrace comp_sub = apply_baseline(compensated, out.baseline);

  for (DeflectionTrace& t : traces) t = apply_baseline(t, out.baseline);
  for (const DeflectionTrace& t : traces) {
    const ContactEvent ev = locate_contact(t);
    if (ev.flagged) ++out.n_flagged_contacts;
    out.contacts.push_back(ev);
  }

  out.drift = estimate_drift(out.contacts);
  out.corrected = opt.drift_correction ? correct_contacts(out.contacts, out.drift)
                                       : out.contacts;
  const ValueWithSigma m = extract_m(out.corrected);

  std::vector<ParabolaSample> rows = build_parabola_samples(traces, out.corrected, m.value);
  const V0Aggregate agg = aggregate_V0(rows, opt.v0_trend_threshold_V);

  out.calibration =
      iterate_k_z0(rows, m, opt.geometry, opt.z0_guess_nm, opt.iterate);
  out.calibration.V0 = agg.V0;
  out.calibration.V0_uncertainty = agg.uncertainty;
  out.calibration.v0_trend_V = agg.trend_V;
  out.calibration.v0_trend_sig = agg.trend_sig;
  out.calibration.v0_constancy_pass = agg.constancy_pass;
  out.calibration.drift = out.drift;
  out.calibration.v0_vs_z = std::move(rows);

  out.casimir = extract_casimir(out.calibration.v0_vs_z, out.calibration.k_prime,
                                out.calibration.z0_nm);
  out.comparison = compare_casimir_methods(out.calibration.v0_vs_z, comp_sub, m,
                                           out.calibration.k_prime,
                                           out.calibration.z0_nm);
  return out;
}

}  // namespace casimir
