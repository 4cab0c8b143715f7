#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "casimir/errors.hpp"
#include "casimir/physics.hpp"
#include "casimir/rng.hpp"
#include "casimir/simulator.hpp"

using namespace casimir;

namespace {

GroundTruth quiet_truth() {
  GroundTruth gt;
  gt.noise_sigma = 0.0;
  gt.scattered_slope = 0.0;
  gt.drift_per_trace = 0.0;
  return gt;
}

int first_contact_index(const GroundTruth& gt, const Trace& tr) {
  // In a clean trace the contact line s = (d - d_c)/m rises; find the first
  // sample that sits on it.
  for (size_t i = 0; i < tr.samples.size(); ++i) {
    const double d = piezo_extension_nm(gt.piezo_rising, tr.samples[i].piezo_voltage);
    const double line = (d - gt.d_c_true) / gt.m_true;
    if (std::abs(tr.samples[i].s_def - line) < 1e-9) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

TEST_CASE("default trace shape and timing") {
  GroundTruth gt = quiet_truth();
  const Trace tr = generate_electrostatic_trace(gt, -0.5, 1);
  REQUIRE(tr.samples.size() == 32768);
  CHECK(tr.branch == "rising");
  CHECK(tr.plate_voltage == -0.5);
  CHECK(tr.sequence_index == 1);
  // piezo voltage and time strictly increase over the half sweep (25 s)
  for (size_t i = 1; i < tr.samples.size(); ++i) {
    CHECK(tr.samples[i].piezo_voltage > tr.samples[i - 1].piezo_voltage);
    CHECK(tr.samples[i].time_s > tr.samples[i - 1].time_s);
  }
  CHECK(tr.samples.back().time_s < 25.0);
  CHECK(tr.samples.back().piezo_voltage < gt.piezo_v_max);
}

TEST_CASE("compensated voltage with Casimir disabled gives zero deflection until contact") {
  GroundTruth gt = quiet_truth();
  TraceOptions o;
  o.casimir_on = false;
  const Trace tr = generate_electrostatic_trace(gt, gt.V0_true, 1, o);
  const int ic = first_contact_index(gt, tr);
  REQUIRE(ic > 0);
  for (int i = 0; i < ic; ++i) CHECK(std::abs(tr.samples[i].s_def) < 1e-12);
  // contact sits within one sample of the deflection-free contact extension
  const double d_lo = piezo_extension_nm(gt.piezo_rising, tr.samples[ic - 1].piezo_voltage);
  const double d_hi = piezo_extension_nm(gt.piezo_rising, tr.samples[ic].piezo_voltage);
  CHECK(d_lo < gt.d_c_true);
  CHECK(d_hi >= gt.d_c_true - 1e-6);
  CHECK(d_hi - d_lo < 0.5);  // sample spacing ~0.19 nm
}

TEST_CASE("in-contact deflection follows the rising contact line exactly") {
  GroundTruth gt = quiet_truth();
  const Trace tr = generate_electrostatic_trace(gt, -0.5, 1);
  const auto& last = tr.samples.back();
  const double d = piezo_extension_nm(gt.piezo_rising, last.piezo_voltage);
  CHECK(last.s_def == doctest::Approx((d - gt.d_c_true) / gt.m_true).epsilon(1e-12));
  CHECK(last.s_def > 0.0);  // past the contact point the signal rises
}

TEST_CASE("drift shifts the effective contact extension per sequence index") {
  GroundTruth gt = quiet_truth();
  gt.drift_per_trace = 0.5;
  const Trace t1 = generate_electrostatic_trace(gt, -0.5, 1);
  const Trace t9 = generate_electrostatic_trace(gt, -0.5, 9);
  const auto& a = t1.samples.back();
  const auto& b = t9.samples.back();
  // same final extension, but the contact line intercept moved by 8 intervals
  CHECK(a.s_def - b.s_def == doctest::Approx(8.0 * 0.5 / gt.m_true).epsilon(1e-9));
}

TEST_CASE("plate voltage validation window") {
  GroundTruth gt = quiet_truth();
  CHECK_THROWS_AS((void)generate_electrostatic_trace(gt, gt.V0_true - 0.6, 1), ValidationError);
  CHECK_THROWS_AS((void)generate_electrostatic_trace(gt, gt.V0_true + 0.51, 1), ValidationError);
  CHECK_THROWS_AS((void)generate_electrostatic_trace(gt, -0.5, 0), ValidationError);
}

TEST_CASE("voltage sequence is an extremity-ranked U permutation of the ladder") {
  const int n = 28;
  const auto seq = generate_voltage_sequence(n, -0.712, -0.008);
  REQUIRE(seq.size() == 28);
  // most extreme first; tie between the two ends resolves to the lower voltage
  CHECK(seq.front() == doctest::Approx(-0.712).epsilon(1e-15));
  // a permutation of the even ladder
  std::vector<double> sorted = seq;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < n; ++i)
    CHECK(sorted[i] == doctest::Approx(-0.712 + (0.704) * i / (n - 1)).epsilon(1e-12));
  // U shape: extremity falls through the first half, rises through the second
  const double mid = 0.5 * (-0.712 - 0.008);
  for (int i = 1; i < n / 2; ++i)
    CHECK(std::abs(seq[i] - mid) <= std::abs(seq[i - 1] - mid) + 1e-15);
  for (int i = n / 2 + 1; i < n; ++i)
    CHECK(std::abs(seq[i] - mid) >= std::abs(seq[i - 1] - mid) - 1e-15);
}

TEST_CASE("fringe record covers one full period with both branches") {
  GroundTruth gt;
  const FringeRecord rec = generate_fringe_record(gt, 4096, false);
  REQUIRE(rec.piezo_voltage.size() == 4096);
  const auto it = std::max_element(rec.piezo_voltage.begin(), rec.piezo_voltage.end());
  const size_t apex = static_cast<size_t>(it - rec.piezo_voltage.begin());
  CHECK(apex > 1000);
  CHECK(apex < 3100);
  for (size_t i = 1; i <= apex; ++i) CHECK(rec.piezo_voltage[i] >= rec.piezo_voltage[i - 1]);
  for (size_t i = apex + 2; i < rec.piezo_voltage.size(); ++i)
    CHECK(rec.piezo_voltage[i] <= rec.piezo_voltage[i - 1]);
  CHECK(rec.time_s.back() < gt.sweep_period_s);
}

TEST_SUITE("properties") {

TEST_CASE("weak-deflection quadratic response: doubling the offset quadruples s_def") {
  GroundTruth gt = quiet_truth();
  TraceOptions o;
  o.casimir_on = false;
  const Trace a = generate_electrostatic_trace(gt, gt.V0_true - 0.1, 1, o);
  const Trace b = generate_electrostatic_trace(gt, gt.V0_true - 0.2, 1, o);
  // pick a far sample: large separation, tiny deflection feedback
  const size_t i = 2000;
  CHECK(b.samples[i].s_def / a.samples[i].s_def == doctest::Approx(4.0).epsilon(1e-3));
  CHECK(a.samples[i].s_def < 0.0);
}

TEST_CASE("self-consistency: deflection times k' balances the total force before contact") {
  GroundTruth gt = quiet_truth();
  for (double v : {-0.712, -0.337, -0.05}) {
    const Trace tr = generate_electrostatic_trace(gt, v, 1);
    const int ic = [&] {
      for (size_t i = 0; i < tr.samples.size(); ++i) {
        const double d = piezo_extension_nm(gt.piezo_rising, tr.samples[i].piezo_voltage);
        if (std::abs(tr.samples[i].s_def - (d - gt.d_c_true) / gt.m_true) < 1e-9)
          return static_cast<int>(i);
      }
      return static_cast<int>(tr.samples.size());
    }();
    double worst = 0.0;
    for (int i = 0; i < ic; i += 7) {
      const double d = piezo_extension_nm(gt.piezo_rising, tr.samples[i].piezo_voltage);
      const double s = tr.samples[i].s_def;
      const double z = (gt.d_c_true - d) + gt.m_true * s + gt.z0_true;
      const double F = electrostatic_force(std::max(z, 0.5), gt.sphere.radius_um, v, gt.V0_true) +
                       casimir_pfa_ideal(std::max(z, 0.5), gt.sphere.radius_um);
      worst = std::max(worst, std::abs(s * gt.k_prime() - F));
    }
    CHECK(worst < 1e-9);  // N; actual imbalance is bounded by the z tolerance, ~1e-16
  }
}

TEST_CASE("trace generation is deterministic and order independent") {
  GroundTruth gt;  // noise on
  const Trace a = generate_electrostatic_trace(gt, -0.5, 3);
  (void)generate_electrostatic_trace(gt, -0.6, 1);  // unrelated generation between
  const Trace b = generate_electrostatic_trace(gt, -0.5, 3);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i)
    CHECK(a.samples[i].s_def == b.samples[i].s_def);  // bitwise
}

TEST_CASE("noise substreams differ between sequence indices") {
  GroundTruth gt;
  const Trace a = generate_electrostatic_trace(gt, -0.5, 1);
  const Trace b = generate_electrostatic_trace(gt, -0.5, 2);
  // identical physics except drift, but independent noise: many samples differ
  int differing = 0;
  for (size_t i = 0; i < 1000; ++i)
    if (a.samples[i].s_def != b.samples[i].s_def) ++differing;
  CHECK(differing > 990);
}

TEST_CASE("gaussian stream moments are sane") {
  GaussianStream gs(99, 7);
  const int n = 200000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = gs.next();
    sum += x;
    sum2 += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("compensated Casimir trace carries no electrostatic term") {
  GroundTruth gt = quiet_truth();
  const Trace comp = generate_casimir_trace(gt, true);
  // at a mid-range sample the deflection equals the pure Casimir response
  const size_t i = 30000;
  const double d = piezo_extension_nm(gt.piezo_rising, comp.samples[i].piezo_voltage);
  const double s = comp.samples[i].s_def;
  const double z = (gt.d_c_true - d) + gt.m_true * s + gt.z0_true;
  CHECK(s * gt.k_prime() ==
        doctest::Approx(casimir_pfa_ideal(z, gt.sphere.radius_um)).epsilon(1e-9));
  // the uncompensated variant deflects further at the same sample
  const Trace unc = generate_casimir_trace(gt, false);
  CHECK(unc.samples[i].s_def < comp.samples[i].s_def);
}

}  // TEST_SUITE properties
