#include "casimir/physics.hpp"

#include <cmath>

#include "casimir/constants.hpp"
#include "casimir/errors.hpp"

namespace casimir {

namespace {

// Expansion coefficients for X(z) = -2*pi*eps0 * sum_m A_m t^(m-1), t = z/R.
constexpr std::array<double, 8> kExpansionA = {
    0.5, -1.18260, 22.2375, -571.366, 9592.45, -90200.5, 383084., -300357.};

void require_geometry(double z_nm, double R_um, const char* who) {
  if (!(z_nm > 0.0)) throw ValidationError(std::string(who) + ": separation must be > 0");
  if (!(R_um > 0.0)) throw ValidationError(std::string(who) + ": sphere radius must be > 0");
}

}  // namespace

double separation_nm(const SeparationState& state) {
  return state.z_piezo_nm + state.s_def * state.m_nm_per_signal + state.z0_nm;
}

double electrostatic_X(double z_nm, double R_um) {
  require_geometry(z_nm, R_um, "electrostatic_X");
  const double t = z_nm / (R_um * 1e3);
  double poly = 0.0;  // sum over m = 1..7 of A_m t^(m-1), Horner form
  for (int m = 7; m >= 1; --m) poly = poly * t + kExpansionA[static_cast<size_t>(m)];
  return -2.0 * kPi * kEpsilon0 * (kExpansionA[0] / t + poly);
}

double exact_sphere_plate_X(double z_nm, double R_um, int* n_terms) {
  require_geometry(z_nm, R_um, "exact_sphere_plate_X");
  const double t = z_nm / (R_um * 1e3);
  const double alpha = std::acosh(1.0 + t);
  const double coth_a = 1.0 / std::tanh(alpha);
  double sum = 0.0;
  int n = 1;
  for (;; ++n) {
    const double na = n * alpha;
    if (na > 700.0) break;  // sinh would overflow; terms are long since dead
    const double term = (coth_a - n / std::tanh(na)) / std::sinh(na);
    sum += term;  // n = 1 term vanishes identically: coth a - coth a = 0
    if (n >= 2 && std::abs(term) < 1e-12 * std::abs(sum)) break;
    if (n > 20000000) throw NumericalError("exact_sphere_plate_X: series failed to converge");
  }
  if (n_terms) *n_terms = n;
  return 2.0 * kPi * kEpsilon0 * sum;
}

double electrostatic_force(double z_nm, double R_um, double V, double V0) {
  const double dv = V - V0;
  return electrostatic_X(z_nm, R_um) * dv * dv;
}

double casimir_pfa_ideal(double z_nm, double R_um) {
  require_geometry(z_nm, R_um, "casimir_pfa_ideal");
  const double z_m = z_nm * 1e-9;
  const double R_m = R_um * 1e-6;
  return -(kPi * kPi * kPi / 360.0) * kHbarC * R_m / (z_m * z_m * z_m);
}

double interference_intensity(const InterferenceParams& p,
                              const std::array<double, 5>& K, double piezo_voltage) {
  const double v = piezo_voltage;
  const double kv = (((K[4] * v + K[3]) * v + K[2]) * v + K[1]) * v + K[0];
  const double extension = kv * v;
  const double phase = 4.0 * kPi * (extension + p.delta_nm) / kLaserWavelengthNm;
  return p.I0 + 0.5 * p.I1 * (1.0 - p.gamma_per_V * v) * (1.0 + std::cos(phase));
}

}  // namespace casimir
