#pragma once

#include "casimir/types.hpp"

namespace casimir {

// z = z_piezo + s_def * m + z0
double separation_nm(const SeparationState& state);

// Sphere-plate electrostatic force coefficient X(z) in N/V^2, defined by
// F_elec = X(z) * (V - V0)^2. Eight-term expansion in t = z/R; accurate to
// better than 1e-4 relative for t in [0.013, 0.05] (verified against the
// exact image-series form below; worst case over [0.001, 0.05] is 6.1e-4
// near t = 0.002).
double electrostatic_X(double z_nm, double R_um);

// Exact perfect-conductor sphere-plate coefficient from the image-charge
// series. Truncates when a term falls below 1e-12 of the partial sum; if
// n_terms is non-null it receives the number of series terms evaluated.
double exact_sphere_plate_X(double z_nm, double R_um, int* n_terms = nullptr);

double electrostatic_force(double z_nm, double R_um, double V, double V0);

// Proximity-force-approximation Casimir force between a perfectly conducting
// sphere and plate: F = -(pi^3/360) * hbar*c * R / z^3. Attractive (negative).
double casimir_pfa_ideal(double z_nm, double R_um);

// Fiber-interferometer intensity for piezo voltage vp on one sweep branch:
// I = I0 + I1/2 * (1 - gamma*vp) * {1 + cos[4*pi*(extension(vp) + delta)/lambda]}
double interference_intensity(const InterferenceParams& p,
                              const std::array<double, 5>& K, double piezo_voltage);

}  // namespace casimir
