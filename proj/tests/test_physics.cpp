#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "casimir/constants.hpp"
#include "casimir/errors.hpp"
#include "casimir/physics.hpp"

using namespace casimir;

namespace {
double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }
}  // namespace

TEST_CASE("separation model is the affine combination of its inputs") {
  SeparationState st;
  st.z_piezo_nm = 120.0;
  st.s_def = -1.5;
  st.m_nm_per_signal = 2.0;
  st.z0_nm = 60.0;
  CHECK(separation_nm(st) == doctest::Approx(120.0 - 3.0 + 60.0).epsilon(1e-15));
  // attractive deflection shrinks the gap
  st.s_def = 0.0;
  CHECK(separation_nm(st) == doctest::Approx(180.0).epsilon(1e-15));
}

TEST_CASE("expansion X matches frozen values and the exact series") {
  const double R = 100.0;  // um
  // Frozen reference values, N/V^2.
  const double Xs15 = -1.8015937395e-09;
  const double Xe15 = -1.8015093026e-09;
  const double Xs50 = -5.1466650823e-10;
  const double Xe50 = -5.1467430762e-10;
  CHECK(rel(electrostatic_X(1500.0, R), Xs15) < 1e-9);
  CHECK(rel(exact_sphere_plate_X(1500.0, R), Xe15) < 1e-9);
  CHECK(rel(electrostatic_X(5000.0, R), Xs50) < 1e-9);
  CHECK(rel(exact_sphere_plate_X(5000.0, R), Xe50) < 1e-9);

  // Relative deviation of the expansion from the exact form at the two
  // reference separations; note the larger error sits at the *smaller* t --
  // the expansion is a fit, not a Taylor series.
  const double d15 = rel(electrostatic_X(1500.0, R), exact_sphere_plate_X(1500.0, R));
  const double d50 = rel(electrostatic_X(5000.0, R), exact_sphere_plate_X(5000.0, R));
  CHECK(d15 == doctest::Approx(4.687e-5).epsilon(1e-3));
  CHECK(d50 == doctest::Approx(1.5154e-5).epsilon(1e-3));
  CHECK(d15 < 1e-4);
  CHECK(d50 < 1e-4);
}

TEST_CASE("exact series truncation and term counts") {
  int n60 = 0, n100 = 0;
  (void)exact_sphere_plate_X(60.0, 100.0, &n60);
  (void)exact_sphere_plate_X(100.0, 100.0, &n100);
  CHECK(n60 == 817);
  CHECK(n100 == 639);
}

TEST_CASE("expansion accuracy band: <=1e-4 holds on [0.014, 0.05]") {
  const double R = 100.0;
  double worst_band = 0.0, worst_all = 0.0, t_worst = 0.0;
  for (double t = 0.001; t <= 0.05 + 1e-12; t += 0.0005) {
    const double z = t * R * 1e3;
    const double d = rel(electrostatic_X(z, R), exact_sphere_plate_X(z, R));
    if (t >= 0.014) worst_band = std::max(worst_band, d);
    if (d > worst_all) {
      worst_all = d;
      t_worst = t;
    }
  }
  CHECK(worst_band < 1e-4);
  // Over the full [0.001, 0.05] range the expansion is only good to ~6e-4,
  // with the worst point near t = 0.002.
  CHECK(worst_all == doctest::Approx(6.05e-4).epsilon(0.05));
  CHECK(t_worst == doctest::Approx(0.002).epsilon(0.3));
}

TEST_CASE("small-t limit of the expansion approaches the parallel-plate lead term") {
  const double R = 100.0;
  const double t = 1e-4;
  const double z = t * R * 1e3;
  const double lead = t * electrostatic_X(z, R) / (-2.0 * kPi * kEpsilon0);
  CHECK(lead == doctest::Approx(0.49988196180459227).epsilon(1e-12));
}

TEST_CASE("electrostatic force is quadratic in the voltage offset and attractive") {
  const double z = 200.0, R = 100.0;
  const double f1 = electrostatic_force(z, R, -0.5, -0.3);
  const double f2 = electrostatic_force(z, R, -0.7, -0.3);
  CHECK(f1 < 0.0);
  CHECK(f2 / f1 == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(electrostatic_force(z, R, -0.3, -0.3) == 0.0);
}

TEST_CASE("ideal Casimir force value and scaling") {
  const double f = casimir_pfa_ideal(100.0, 100.0);
  CHECK(rel(f, -2.7229770503e-10) < 1e-9);
  CHECK(f < 0.0);
  // 1/z^3 scaling and linear-in-R scaling
  CHECK(casimir_pfa_ideal(200.0, 100.0) / f == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(casimir_pfa_ideal(100.0, 50.0) / f == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("interference intensity hits the dark fringe in the linear reference case") {
  InterferenceParams p;
  p.I0 = 0.0;
  p.I1 = 2.0;
  p.gamma_per_V = 0.0;
  p.delta_nm = 0.0;
  std::array<double, 5> K{158.2, 0.0, 0.0, 0.0, 0.0};
  // extension = 158.2 nm = lambda/4: phase pi -> I = 0
  CHECK(interference_intensity(p, K, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  // at vp = 0 the cosine is at its maximum: I = I1
  CHECK(interference_intensity(p, K, 0.0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("fringe period in extension is half the laser wavelength") {
  InterferenceParams p;
  p.gamma_per_V = 0.0;  // flat envelope isolates the periodic term
  std::array<double, 5> K{1.0, 0.0, 0.0, 0.0, 0.0};  // extension == vp
  const double I_a = interference_intensity(p, K, 1000.0);
  const double I_b = interference_intensity(p, K, 1000.0 + kLaserWavelengthNm / 2.0);
  CHECK(I_a == doctest::Approx(I_b).epsilon(1e-9));
}

TEST_CASE("geometry validation") {
  CHECK_THROWS_AS((void)electrostatic_X(0.0, 100.0), ValidationError);
  CHECK_THROWS_AS((void)electrostatic_X(100.0, -1.0), ValidationError);
  CHECK_THROWS_AS((void)exact_sphere_plate_X(-5.0, 100.0), ValidationError);
  CHECK_THROWS_AS((void)casimir_pfa_ideal(0.0, 100.0), ValidationError);
}
