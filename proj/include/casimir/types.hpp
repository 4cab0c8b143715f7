#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace casimir {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct SphereGeometry {
  double radius_um = 100.0;
  double radius_uncertainty_um = 0.0;  // recorded, not propagated
};

// Separation model: z = z_piezo + s_def * m + z0.
// Attractive forces deflect the cantilever toward the plate, so s_def < 0
// reduces z; m > 0 converts signal units to nm.
struct SeparationState {
  double z_piezo_nm = 0.0;
  double s_def = 0.0;
  double m_nm_per_signal = 0.0;
  double z0_nm = 0.0;
};

struct FitResult {
  Vec parameters;
  Mat covariance;
  double residual_rms = 0.0;
  int n_points = 0;
  bool converged = false;
};

struct TraceSample {
  double time_s = 0.0;
  double piezo_voltage = 0.0;
  double s_def = 0.0;
};

struct Trace {
  double plate_voltage = 0.0;
  int sequence_index = 0;
  std::string branch = "rising";
  std::vector<TraceSample> samples;
};

struct FringeRecord {
  std::vector<double> time_s;
  std::vector<double> piezo_voltage;
  std::vector<double> intensity;
};

// Piezo response truth: extension_nm(v) = (K0 + K1 v + K2 v^2 + K3 v^3 + K4 v^4) * v
struct PiezoBranchTruth {
  std::array<double, 5> K{};
};

struct InterferenceParams {
  double I0 = 1.0;
  double I1 = 2.0;
  double gamma_per_V = 8.0e-4;
  double delta_nm = 94.0;
};

struct GroundTruth {
  double V0_true = -0.337;    // V
  double k_true = 0.19;       // N/m
  double m_true = 2.0;        // nm per signal unit
  double z0_true = 60.0;      // nm
  SphereGeometry sphere{100.0, 0.0};
  PiezoBranchTruth piezo_rising{{80.0, 0.065, -5.2e-4, 2.6e-6, -6.5e-9}};
  PiezoBranchTruth piezo_falling{{81.2, 0.052, -4.4e-4, 2.2e-6, -5.5e-9}};
  InterferenceParams interference{};
  double d_c_true = 6150.0;       // nm, deflection-free contact extension, trace 1
  double drift_per_trace = 0.021; // nm per trace interval
  double scattered_slope = 3.0e-5;  // signal per nm of extension
  double noise_sigma = 0.005;       // signal units per sample
  // Optional z-dependent contact potential, V per um of separation; the
  // effective V0 at separation z is V0_true + v0_gradient_per_um * z/1000.
  // Zero (the default) reproduces the constant-V0 model exactly.
  double v0_gradient_per_um = 0.0;
  std::uint64_t seed = 20260821;
  int n_traces = 28;
  int samples_per_trace = 32768;
  double plate_v_min = -0.712;
  double plate_v_max = -0.008;
  double piezo_v_max = 75.0;
  double sweep_period_s = 50.0;  // 0.02 Hz triangle
  double fringe_snr = 100.0;     // (I1/2) / noise sigma for fringe records

  // Effective spring constant in N per signal unit: F = k' * s_def.
  double k_prime() const { return k_true * m_true * 1e-9; }
};

struct ContactEvent {
  int trace_index = 0;
  double d_c_nm = 0.0;
  double s_def_at_contact = 0.0;
  bool flagged = false;  // extrapolated d_c fell outside [d_X, d_Y]
  int x_index = 0;       // sample index of X, the last pre-contact sample
};

struct DriftEstimate {
  // Negative when contacts migrate toward larger extension trace over trace;
  // correction is additive: d_c,i + (i-1) * drift_per_interval_nm.
  double drift_per_interval_nm = 0.0;
  int n_estimates = 0;
  double spread_nm = 0.0;  // sample standard deviation of the usable estimates
};

struct ParabolaSample {
  double z_grid_nm = 0.0;
  double V0 = 0.0;
  double V0_uncertainty = 0.0;
  double beta = 0.0;  // curvature of deflection vs plate voltage; negative
  double S0 = 0.0;    // voltage-independent deflection at the apex
  double S0_uncertainty = 0.0;
};

struct PiezoBranchFit {
  std::array<double, 5> K{};
  double I0 = 0.0;
  double I1 = 0.0;
  double gamma_per_V = 0.0;
  double delta_nm = 0.0;  // reported modulo half the laser wavelength
  double vmin_v = 0.0;    // drive-voltage range the branch was fit over
  double vmax_v = 0.0;
  // Internal fit in the normalized basis (I0, I1, g, delta, C0..C4) with
  // u = Vp/vmax, g = gamma*vmax, C_k = K_k*vmax^(k+1); covariance refers
  // to that ordering.
  FitResult fit;
};

struct PiezoCalibration {
  PiezoBranchFit rising;
  PiezoBranchFit falling;
};

struct ScanDiagnostic {
  Vec start_nm;
  Vec k_prime;
  Vec z0_nm;
  double k_slope_per_nm = 0.0;
  double k_slope_sig = 0.0;     // |slope| / its standard error
  double relative_trend = 0.0;  // |slope| * span / mean k'
  bool pass = true;
};

struct CalibrationResult {
  double V0 = 0.0, V0_uncertainty = 0.0;
  double m = 0.0, m_uncertainty = 0.0;            // nm per signal
  double k_prime = 0.0, k_prime_uncertainty = 0.0;  // N per signal
  double k = 0.0, k_uncertainty = 0.0;              // N/m, k = k_prime / m * 1e9
  double z0_nm = 0.0, z0_uncertainty_nm = 0.0;
  std::vector<ParabolaSample> v0_vs_z;
  int iterations = 0;  // full k' -> z0 cycles; always >= 2
  ScanDiagnostic scan;
  double v0_trend_V = 0.0;      // |slope| * z-span of the V0-vs-z line
  double v0_trend_sig = 0.0;    // slope significance on binned means
  bool v0_constancy_pass = true;
  DriftEstimate drift;
};

struct RoughnessBin {
  double height_nm = 0.0;
  double percent = 0.0;
};

struct RoughnessHistogram {
  std::string surface_label;
  std::vector<RoughnessBin> bins;
};

struct RoughnessStats {
  double mean_nm = 0.0;  // area-weighted mean plane height
  double rms_nm = 0.0;   // about the mean plane
  double max_nm = 0.0;   // highest bin with nonzero coverage
  double tail_fraction = 0.0;
  double bin_width_nm = 0.0;
};

struct ConsistencyVerdict {
  bool pass = false;
  double peak_sum_nm = 0.0;  // sphere max + plate max, each above its mean plane
  double window_lo_nm = 0.0;
  double window_hi_nm = 0.0;
};

}  // namespace casimir
