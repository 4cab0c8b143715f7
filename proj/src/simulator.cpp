#include "casimir/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "casimir/constants.hpp"
#include "casimir/errors.hpp"
#include "casimir/physics.hpp"
#include "casimir/rng.hpp"

namespace casimir {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

GaussianStream::GaussianStream(std::uint64_t seed, std::uint64_t stream)
    : eng_(splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1))) {}

double GaussianStream::uniform01() {
  return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
}

double GaussianStream::next() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  const double u1 = uniform01();
  const double u2 = uniform01();
  const double rad = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * kPi * u2;
  spare_ = rad * std::sin(ang);
  have_spare_ = true;
  return rad * std::cos(ang);
}

GroundTruth default_ground_truth() { return GroundTruth{}; }

double piezo_extension_nm(const PiezoBranchTruth& K, double v) {
  const double kv = (((K.K[4] * v + K.K[3]) * v + K.K[2]) * v + K.K[1]) * v + K.K[0];
  return kv * v;
}

std::vector<double> generate_voltage_sequence(int n, double v_min, double v_max) {
  if (n < 1) throw ValidationError("generate_voltage_sequence: need n >= 1");
  if (!(v_max > v_min)) throw ValidationError("generate_voltage_sequence: need v_max > v_min");
  std::vector<double> ladder(n);
  for (int i = 0; i < n; ++i)
    ladder[i] = n == 1 ? v_min : v_min + (v_max - v_min) * i / (n - 1);
  const double mid = 0.5 * (v_min + v_max);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ea = std::abs(ladder[a] - mid), eb = std::abs(ladder[b] - mid);
    if (ea != eb) return ea > eb;
    return ladder[a] < ladder[b];
  });
  std::vector<double> out;
  out.reserve(n);
  for (int i = 0; i < n; i += 2) out.push_back(ladder[order[i]]);  // ranks 1,3,5,...
  std::vector<double> second;
  for (int i = 1; i < n; i += 2) second.push_back(ladder[order[i]]);
  out.insert(out.end(), second.rbegin(), second.rend());  // ranks ...,6,4,2
  return out;
}

Trace generate_electrostatic_trace(const GroundTruth& gt, double plate_voltage,
                                   int sequence_index, const TraceOptions& o) {
  if (sequence_index < 1)
    throw ValidationError("generate_electrostatic_trace: sequence_index must be >= 1");
  if (std::abs(plate_voltage - gt.V0_true) > 0.5 + 1e-12)
    throw ValidationError(
        "generate_electrostatic_trace: plate voltage more than 0.5 V from the contact potential");
  const int n = gt.samples_per_trace;
  if (n < 64) throw ValidationError("generate_electrostatic_trace: too few samples per trace");
  if (!(gt.m_true > 0) || !(gt.k_true > 0))
    throw ValidationError("generate_electrostatic_trace: m_true and k_true must be > 0");

  Trace tr;
  tr.plate_voltage = plate_voltage;
  tr.sequence_index = sequence_index;
  tr.branch = "rising";
  tr.samples.resize(n);

  const double half_period = 0.5 * gt.sweep_period_s;
  const double d_c_eff = gt.d_c_true + (sequence_index - 1) * gt.drift_per_trace;
  const double kp = gt.k_prime();
  const double dv = plate_voltage - gt.V0_true;
  const double R = gt.sphere.radius_um;

  std::vector<double> d(n), z(n);
  for (int i = 0; i < n; ++i) {
    const double vp = gt.piezo_v_max * i / n;
    d[i] = piezo_extension_nm(gt.piezo_rising, vp);
    tr.samples[i].time_s = half_period * i / n;
    tr.samples[i].piezo_voltage = vp;
  }

  // Self-consistent deflection: s = F_total(z)/k', z = gap + m*s. The gap at
  // zero deflection is d_c_eff - d + z0. The map is monotone (attractive
  // forces strengthen as z shrinks), so iterates descend toward the root;
  // once they cross the contact threshold the limit is below it too and the
  // sample is in contact -- no need to resolve the (arbitrarily slow,
  // near-critical) tail of the iteration there. Separations are clamped at
  // 0.5 nm inside the force laws.
  for (int i = 0; i < n; ++i) {
    const double gap = d_c_eff - d[i] + gt.z0_true;
    double zi = gap, si = 0.0;
    bool done = false;
    for (int it = 0; it < o.max_fixed_point_iterations && !done; ++it) {
      const double zc = std::max(zi, 0.5);
      const double dv_z = dv - gt.v0_gradient_per_um * (zc * 1e-3);
      double F = electrostatic_X(zc, R) * dv_z * dv_z;
      if (o.casimir_on) F += casimir_pfa_ideal(zc, R);
      const double s_new = F / kp;
      const double z_new = gap + gt.m_true * s_new;
      done = std::abs(z_new - zi) <= o.z_tol_nm || z_new <= gt.z0_true + 1e-9;
      si = s_new;
      zi = z_new;
    }
    if (!done)
      throw NumericalError("generate_electrostatic_trace: deflection fixed point did not converge at sample " +
                           std::to_string(i));
    tr.samples[i].s_def = si;
    z[i] = zi;
  }

  // Contact: first sample whose converged separation reaches z0; from there
  // the tip rides the surface and s follows the contact line exactly.
  for (int i = 0; i < n; ++i) {
    if (z[i] <= gt.z0_true + 1e-9) {
      for (int j = i; j < n; ++j)
        tr.samples[j].s_def = (d[j] - d_c_eff) / gt.m_true;
      break;
    }
  }

  for (int i = 0; i < n; ++i) tr.samples[i].s_def += gt.scattered_slope * d[i];
  if (o.with_noise && gt.noise_sigma > 0) {
    GaussianStream gs(gt.seed, static_cast<std::uint64_t>(sequence_index));
    for (int i = 0; i < n; ++i) tr.samples[i].s_def += gt.noise_sigma * gs.next();
  }
  return tr;
}

Trace generate_casimir_trace(const GroundTruth& gt, bool compensated,
                             double uncompensated_offset_V, const TraceOptions& o) {
  const double v = compensated ? gt.V0_true : gt.V0_true + uncompensated_offset_V;
  return generate_electrostatic_trace(gt, v, gt.n_traces + 1, o);
}

FringeRecord generate_fringe_record(const GroundTruth& gt, int n_samples, bool with_noise) {
  if (n_samples < 64) throw ValidationError("generate_fringe_record: too few samples");
  FringeRecord rec;
  rec.time_s.resize(n_samples);
  rec.piezo_voltage.resize(n_samples);
  rec.intensity.resize(n_samples);
  GaussianStream gs(gt.seed, 0);
  const double sigma = with_noise && gt.fringe_snr > 0
                           ? (gt.interference.I1 / 2.0) / gt.fringe_snr
                           : 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const double t = gt.sweep_period_s * i / n_samples;
    const double phase = t / gt.sweep_period_s;  // [0, 1)
    const bool rising = phase < 0.5;
    const double vp = rising ? gt.piezo_v_max * 2.0 * phase
                             : gt.piezo_v_max * (2.0 - 2.0 * phase);
    const auto& K = rising ? gt.piezo_rising.K : gt.piezo_falling.K;
    double I = interference_intensity(gt.interference, K, vp);
    if (sigma > 0) I += sigma * gs.next();
    rec.time_s[i] = t;
    rec.piezo_voltage[i] = vp;
    rec.intensity[i] = I;
  }
  return rec;
}

}  // namespace casimir
