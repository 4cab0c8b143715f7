#pragma once

namespace casimir {

// CODATA 2018. Unit conventions at API boundaries: separations and extensions
// in nm, sphere radii in um, forces in N, voltages in V, deflections in
// detector signal units.
inline constexpr double kEpsilon0 = 8.8541878128e-12;        // F/m
inline constexpr double kHbar = 1.054571817e-34;             // J*s
inline constexpr double kSpeedOfLight = 2.99792458e8;        // m/s
inline constexpr double kHbarC = kHbar * kSpeedOfLight;      // J*m
inline constexpr double kLaserWavelengthNm = 632.8;
inline constexpr double kPi = 3.14159265358979323846;

struct PhysicalConstants {
  double epsilon0 = kEpsilon0;
  double hbar_c = kHbarC;
  double laser_wavelength_nm = kLaserWavelengthNm;
};

}  // namespace casimir
