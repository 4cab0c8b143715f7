#pragma once

#include "casimir/errors.hpp"
#include "casimir/types.hpp"

#include <vector>

namespace casimir {

// Calibration-and-analysis chain for sphere-plate force traces: per-trace
// preprocessing and contact location, drift correction across the voltage
// sequence, deflection coefficient m from the contact line, per-separation
// parabola extraction of V0 and beta, alternating k'/z0 estimation over a
// start-point scan, and two independent Casimir force extractions that are
// cross-checked against each other.

// One force trace in the extension domain: d_nm is the piezo extension
// (monotone increasing over the sweep), s_def the deflection signal.
struct DeflectionTrace {
  double plate_voltage = 0.0;
  int sequence_index = 0;
  std::vector<double> d_nm;
  std::vector<double> s_def;
};

// Converts a raw sampled trace using a piezo extension law (either a fitted
// rising-branch calibration or the known truth coefficients).
DeflectionTrace to_extension_domain(const Trace& trace,
                                    const std::array<double, 5>& K);

// Linear scattered-light background: s_baseline(d) = offset + slope * d.
struct ScatteredBaseline {
  double offset = 0.0;
  double slope_per_nm = 0.0;
  int n_samples = 0;  // far-region samples the line was fit over
};

// Fits the background line over the far region: the samples farthest from
// contact, i.e. the leading `far_fraction` of the sweep (the trace starts at
// maximum separation). Throws ValidationError if that region holds fewer
// than 100 samples.
ScatteredBaseline fit_scattered_baseline(const DeflectionTrace& trace,
                                         double far_fraction = 0.2);

// Subtracts a previously fitted background from a trace.
DeflectionTrace apply_baseline(const DeflectionTrace& trace,
                               const ScatteredBaseline& baseline);

// Fit-and-subtract on a single trace. The full pipeline instead fits the
// baseline once on the compensated trace and applies it to every trace of
// the sequence: at large separation an uncompensated trace still carries a
// genuine electrostatic tail, and per-trace subtraction would remove it and
// bias m by ~2% regardless of noise.
DeflectionTrace subtract_scattered_light(const DeflectionTrace& trace,
                                         double far_fraction = 0.2);

// Locates the contact kink: the first sample where the forward difference of
// s_def exceeds 10x the pre-contact noise scale for 3 consecutive samples.
// W, X are the last two pre-contact samples and Y the first in-contact one;
// d_c extrapolates the WX line to Y's deflection:
//   d_c = d_X - (d_W - d_X)(S_X - S_Y)/(S_W - S_X).
// The event is flagged when d_c falls outside [d_X, d_Y]; a degenerate WX
// line (S_W == S_X) falls back to the flagged midpoint (d_X + d_Y)/2.
// Throws ValidationError when no contact is found.
ContactEvent locate_contact(const DeflectionTrace& trace);

// Average per-interval contact drift from five point sets {(i, i+1, N-i+1)}:
// project contact N-i+1 onto the line through contacts i, i+1 in the
// (s_def, d_c) plane, divide (expected - observed) d by the elapsed
// intervals. Sets with a degenerate pair or no elapsed gap are skipped; at
// least 3 must survive. Contacts must be in recorded time order, >= 8 of
// them. The estimate is negative when contacts migrate to larger extension.
DriftEstimate estimate_drift(const std::vector<ContactEvent>& contacts);

// Shifts contact i by (i-1) * drift_per_interval (additive), collapsing the
// drifted "arrow head" back onto a single line.
std::vector<ContactEvent> correct_contacts(const std::vector<ContactEvent>& contacts,
                                           const DriftEstimate& drift);

struct ValueWithSigma {
  double value = 0.0;
  double sigma = 0.0;
};

// Deflection coefficient m = |slope| of the d_c vs s_def contact line,
// uncertainty from the line-fit covariance. Needs >= 3 corrected contacts
// with distinct deflections.
ValueWithSigma extract_m(const std::vector<ContactEvent>& corrected);

// Resamples every trace onto a common separation grid and fits, at each grid
// value, the deflection-vs-voltage parabola across traces.
//
// The grid uses z from the separation model with provisional z0 = 0 and a
// single deflection-free datum dc0 = mean(d_c - m*s_c) over the corrected
// contacts; apex quantities (V0, S0) are invariant under that uniform shift,
// and beta is refit against the full model later. Grid spacing is the median
// sample spacing, range 60 nm up to the highest separation covered by all
// traces (capped at 6 um); grid points not covered by every trace are
// dropped. Requires >= 5 traces.
std::vector<ParabolaSample> build_parabola_samples(
    const std::vector<DeflectionTrace>& traces,
    const std::vector<ContactEvent>& corrected, double m);

struct V0Aggregate {
  double V0 = 0.0;
  double uncertainty = 0.0;  // standard error over the grid
  double trend_V = 0.0;      // |slope| * z-span of the V0(z) line
  double trend_sig = 0.0;    // slope / its standard error, on binned means
  bool constancy_pass = true;
};

// Mean V0 over the grid plus a constancy check. Adjacent grid rows share
// interpolation noise, so raw-row slope significance is inflated; the gate
// therefore tests the slope on 20 bin means and flags only a trend that is
// both significant (> 2 SE) and material (|slope| * span > trend_threshold).
// Requires >= 10 samples.
V0Aggregate aggregate_V0(const std::vector<ParabolaSample>& samples,
                         double trend_threshold_V = 1e-3);

struct IterateOptions {
  double start_min_nm = 100.0;
  double start_max_nm = 300.0;
  double start_step_nm = 5.0;
  double end_nm = 2500.0;
  double k_tol_rel = 1e-4;
  double z0_tol_nm = 0.1;
  int max_cycles = 50;
  double scan_trend_threshold = 0.005;  // relative k' trend across the scan
  int min_surviving_starts = 20;
};

// Alternating estimation of k' and z0 from beta(z) = X(z + z0)/k'. Each
// cycle fits k' (closed form, z0 fixed) then z0 (one-parameter Gauss-Newton,
// k' fixed) for every start point, averaging over the scan; the fit window
// [start, end] is re-evaluated against the corrected separation each cycle.
// Runs at least 2 full cycles; stops when both parameter changes fall below
// tolerance, errors after max_cycles. Start points whose fit degenerates are
// dropped; at least min_surviving_starts must remain. The per-start scan is
// recorded, with a flat-trend check on k' vs start (a trend beyond
// scan_trend_threshold of k' indicates a systematic separation error).
CalibrationResult iterate_k_z0(const std::vector<ParabolaSample>& samples,
                               const ValueWithSigma& m, const SphereGeometry& geom,
                               double z0_guess_nm, const IterateOptions& opt = {});

// One start-point scan at a fixed separation offset: per-start closed-form k'
// over [start, end], then a per-start z0 refinement at the mean k'. The line
// fit of k' against start point yields the flat-trend diagnostic; `pass` is
// relative_trend < scan_trend_threshold. A genuine separation-offset error
// (e.g. a mis-assigned z0) shows up as a strong, material k' trend.
ScanDiagnostic scan_k_prime(const std::vector<ParabolaSample>& samples,
                            const SphereGeometry& geom, double z0_nm,
                            const IterateOptions& opt = {});

struct ForcePoint {
  double z_nm = 0.0;
  double force_N = 0.0;
  double sigma_N = 0.0;
};

// Parabola-offset extraction: F(z) = S0(z) * k' at every grid point, with
// absolute z rebuilt as z_grid + z0.
std::vector<ForcePoint> extract_casimir(const std::vector<ParabolaSample>& samples,
                                        double k_prime, double z0_nm);

struct MethodComparison {
  std::vector<double> z_nm;        // compared grid points (absolute z)
  std::vector<double> F_offset_N;  // parabola-offset method
  std::vector<double> F_direct_N;  // compensated-trace method
  std::vector<double> sigma_N;     // combined 1-sigma per point
  double overlap_fraction = 0.0;   // |dF| <= 2 sigma
  bool pass = false;               // overlap at >= 95% of points
  double max_abs_diff_N = 0.0;
  double max_rel_diff = 0.0;
  double loglog_slope = 0.0;  // d log|F| / d log z over the scaling window
  double direct_noise_signal = 0.0;
};

// Cross-check of the two extractions over [window_lo, window_hi] nm: the
// compensated trace (already baseline-subtracted) is converted to force via
// its own contact and F = s_def * k', interpolated onto the shared grid, and
// compared pointwise against the parabola-offset forces. Also reports the
// log-log slope of the offset-method force over [window_lo, slope_hi] nm
// (points with F < 0, weighted by squared signal-to-noise).
MethodComparison compare_casimir_methods(
    const std::vector<ParabolaSample>& samples, const DeflectionTrace& compensated,
    const ValueWithSigma& m, double k_prime, double z0_nm,
    double window_lo_nm = 100.0, double window_hi_nm = 500.0,
    double slope_hi_nm = 300.0);

struct PipelineOptions {
  double far_fraction = 0.2;
  bool drift_correction = true;
  double z0_guess_nm = 60.0;  // prior from the roughness-peak analysis
  SphereGeometry geometry{};
  double v0_trend_threshold_V = 1e-3;
  IterateOptions iterate{};
};

struct PipelineResult {
  ScatteredBaseline baseline;
  std::vector<ContactEvent> contacts;   // located, in sequence order
  std::vector<ContactEvent> corrected;  // after drift correction
  DriftEstimate drift;
  CalibrationResult calibration;  // includes the parabola rows in v0_vs_z
  std::vector<ForcePoint> casimir;  // offset-method force, full grid
  MethodComparison comparison;
  int n_flagged_contacts = 0;
};

// Full chain over one voltage sequence plus its compensated trace. The
// scattered-light baseline is fit once on the compensated trace (which has
// no electrostatic tail) and applied to every trace. Flagged contact
// extrapolations are kept as-is (the flag is advisory) and counted.
PipelineResult analyze_traces(const std::vector<DeflectionTrace>& voltage_traces,
                              const DeflectionTrace& compensated,
                              const PipelineOptions& opt = {});

}  // namespace casimir
