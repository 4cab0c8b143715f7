#pragma once

#include "casimir/errors.hpp"
#include "casimir/types.hpp"

#include <utility>

namespace casimir {

// Interferometric piezo calibration.
//
// The piezo is driven with a triangular voltage wave while a laser
// interferometer records fringe intensity. Each branch of the wave (rising,
// falling) gets its own polynomial voltage-to-extension law
//   d(Vp) = (K0 + K1*Vp + K2*Vp^2 + K3*Vp^3 + K4*Vp^4) * Vp
// fit together with the interferometer nuisance parameters (offset, fringe
// amplitude, linear envelope tilt, phase offset).

// Thrown when the final full fit fails to converge; carries the best
// parameters reached so callers can inspect what went wrong.
class CalibrationError : public NumericalError {
 public:
  CalibrationError(const std::string& what, PiezoBranchFit partial)
      : NumericalError(what), partial_(std::move(partial)) {}
  const PiezoBranchFit& partial() const { return partial_; }

 private:
  PiezoBranchFit partial_;
};

// Splits a fringe record at the extrema of the triangular drive. Extrema are
// detected as sign changes of the Vp first difference after a 3-sample
// majority filter, so a single spurious reversal sample does not create a
// phantom segment. Throws ValidationError if the record does not contain at
// least one rising and one falling stretch (less than one full period).
std::pair<FringeRecord, FringeRecord> split_branches(const FringeRecord& record);

// Counts interference fringes in an intensity series with a hysteresis
// comparator around the mid-level (band = 0.1 * intensity span per side), so
// noise at the threshold is not double counted. One fringe = one full
// oscillation = two decisive mid-level crossings.
int count_fringes(const std::vector<double>& intensity);

// Fits all nine branch parameters (I0, I1, gamma, delta, K0..K4) to one
// branch segment. Initial guesses: I0/I1 from the intensity min/max, K0 from
// the fringe count, everything else zero. The fit warms up in stages (phase
// and scale first, then envelope and curvature terms) before releasing all
// nine parameters, and retries the warm-up at +-1 fringe to escape a
// miscounted starting phase.
// Preconditions: segment spans >= 5 fringes (ValidationError otherwise).
// Throws CalibrationError with the partial result if the final fit does not
// converge.
PiezoBranchFit fit_piezo_branch(const FringeRecord& segment);

// Convenience: split + fit both branches.
PiezoCalibration calibrate_piezo(const FringeRecord& record);

struct ExtensionValue {
  double d_nm = 0.0;
  bool extrapolated = false;  // Vp outside the range the branch was fit over
};

enum class Branch { kRising, kFalling };

// Evaluates the calibrated voltage-to-extension law for one branch.
ExtensionValue extension_from_voltage(const PiezoCalibration& cal, double vp,
                                      Branch branch);

}  // namespace casimir
