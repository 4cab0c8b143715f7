#pragma once

#include "casimir/types.hpp"

namespace casimir {

GroundTruth default_ground_truth();

// Extension in nm produced by piezo voltage v on one branch.
double piezo_extension_nm(const PiezoBranchTruth& K, double piezo_voltage);

// Measurement ordering for the plate-voltage ladder: extremity-ranked U.
// Odd extremity ranks are taken descending in the first half of the sequence
// and even ranks ascending in the second, so both sequence ends carry the
// largest |V - midrange| and the middle of the run carries the smallest.
// Ties resolve toward the lower voltage. The returned values are a
// permutation of the even ladder between v_min and v_max.
std::vector<double> generate_voltage_sequence(int n, double v_min, double v_max);

struct TraceOptions {
  bool with_noise = true;
  bool casimir_on = true;
  int max_fixed_point_iterations = 500;
  double z_tol_nm = 1e-9;
};

// One approach trace (rising piezo branch) at the given plate voltage.
// Deflection per sample solves the self-consistent force balance
// s = F_total(z(s)) / k'; after the first sample whose converged separation
// reaches z0 the deflection follows the contact line s = (d - d_c_eff)/m.
// Scattered-light slope and per-sample Gaussian noise are added last.
// The plate voltage must lie within 0.5 V of the true contact potential.
Trace generate_electrostatic_trace(const GroundTruth& gt, double plate_voltage,
                                   int sequence_index,
                                   const TraceOptions& options = {});

// Casimir measurement trace: compensated runs at the true contact potential
// (zero electrostatic force), uncompensated at V0_true + uncompensated_offset_V.
Trace generate_casimir_trace(const GroundTruth& gt, bool compensated,
                             double uncompensated_offset_V = 0.1,
                             const TraceOptions& options = {});

// Interferometer record over one full triangle period (rising then falling
// branch), n_samples total. Noise sigma is (I1/2) / gt.fringe_snr.
FringeRecord generate_fringe_record(const GroundTruth& gt, int n_samples = 65536,
                                    bool with_noise = true);

}  // namespace casimir
