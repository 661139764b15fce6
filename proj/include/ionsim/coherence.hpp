#pragma once

#include <span>
#include <vector>

#include "ionsim/constants.hpp"
#include "ionsim/two_qubit.hpp"

namespace ionsim::coherence {

/// Linear Zeeman sensitivity of a transition, (m2 g2 - m1 g1) muB / h.
struct ZeemanSensitivity {
  double hz_per_gauss = 0.0;

  static ZeemanSensitivity from_levels(double m1, double g1, double m2,
                                       double g2,
                                       const PhysicalConstants& constants);
  // S1/2 m=-1/2 -> D5/2 m=-5/2, S1/2 m=-1/2 -> D5/2 m=-3/2 and the qubit
  // splitting D -> D', with g(S1/2) = 2 and g(D5/2) = 6/5.
  static ZeemanSensitivity s_to_d(const PhysicalConstants& constants);
  static ZeemanSensitivity s_to_dprime(const PhysicalConstants& constants);
  static ZeemanSensitivity d_to_dprime(const PhysicalConstants& constants);
};

double zeeman_frequency(const ZeemanSensitivity& sensitivity, double b_gauss);

/// Trap-centre itinerary of the shuttling sequence. Position n hosts ion
/// n+1 at the cavity waist; the string returns to the first position for
/// readout. Dwell times include the 30 us transport shares at each end.
struct ShuttleSchedule {
  std::vector<double> trap_positions;  // X^T_n (m)
  double initial_dwell = 126e-6;
  double dwell = 156e-6;
  double final_dwell = 30e-6;
  /// Dwell time remaining at an ion's own position once its Raman pulse
  /// (and therefore its phase accumulation) starts.
  double post_raman = 80e-6;

  /// Standard schedule for a string with the given ion offsets: the trap
  /// centre moves to -x_n so ion n sits at the waist.
  static ShuttleSchedule for_string(std::span<const double> ion_positions);

  /// Storage interval between ion k's preparation and the common readout.
  double storage_time(int ion_index) const;
};

struct FieldModel {
  double gradient_g_per_m = 4.4;
  /// Average-field miscalibration: how much the laser-frequency calibration
  /// overestimates the string-averaged qubit splitting, in gauss.
  double mis_av_gauss = 48e-6;
};

/// Accumulated qubit phase per ion over the remainder of the schedule,
/// unwrapped. Ion j is prepared when its own Raman pulse starts and picks up
/// 2 pi t_k (f_DD'(B at its location) - f_calibration) at every subsequent
/// trap position.
std::vector<double> accumulate_phases(const ShuttleSchedule& schedule,
                                      const FieldModel& field,
                                      std::span<const double> ion_positions,
                                      const PhysicalConstants& constants);

/// Gaussian phase-flip probability p(t) = exp(-t^2 / (2 sigma^2)).
double phase_flip_probability(double t, double sigma);

/// Phase-damping Kraus map on the ion qubit:
/// E(rho) = (1+p)/2 rho + (1-p)/2 (sz x I) rho (sz x I).
TwoQubitState dephase(const TwoQubitState& rho, double t, double sigma);

/// Bell-state fidelity <psi(0)| E(rho_last, tau) |psi(0)> with
/// tau = |t - 1.4 ms| per ion.
std::vector<double> fidelity_vs_ion_index(const TwoQubitState& rho_last,
                                          std::span<const double> storage_times,
                                          double sigma,
                                          double reference_time = 1.4e-3);

struct RamseyFit {
  double sigma = 0.0;
  double sigma_stderr = 0.0;
};

/// Nonlinear least squares of contrast(t) = exp(-t^2/(2 sigma^2)).
RamseyFit ramsey_contrast_fit(std::span<const double> times,
                              std::span<const double> contrasts);

}  // namespace ionsim::coherence
