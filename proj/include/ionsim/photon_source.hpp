#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ionsim/constants.hpp"

namespace ionsim::photon {

struct CavityGeometry {
  double waist = 12.31e-6;               // vacuum-mode waist (m)
  double axis_angle = deg_to_rad(4.1);   // string/cavity-axis complement (rad)
  double photon_wavelength = 854e-9;     // m
  double length = 19.906e-3;             // m
  double mirror_radius = 9.984e-3;       // m

  void validate() const;
};

struct CavityParams {
  double finesse = 0.0;
  double round_trip_loss = 0.0;     // L = 2 pi / F
  double kappa = 0.0;               // field decay rate c L / (4 l), rad/s
  double escape_probability = 0.0;  // T2 / L
  double output_transmission = 0.0; // T2
};

struct RamanBeam {
  double wavelength = 393e-9;
  double waist = 1.3e-6;                // intensity waist sigma (m)
  double rabi = kTwoPi * 53.2e6;        // ground-state Rabi (rad/s)
  double detuning = 0.0;                // set via stark_calibrate_detuning
  double bichromatic_phase = 0.0;

  void validate() const;
};

struct PhotonSourceModel {
  double g = kTwoPi * 1.53e6;           // max ion-cavity coupling (rad/s)
  double kappa = 0.0;                   // cavity field decay (rad/s)
  double gamma_eff = kTwoPi * 23.0e6;   // effective spontaneous-loss rate
  double detuning = 0.0;                // Raman detuning Delta (rad/s)
  double jitter_sigma = kTwoPi * 10e3;  // cavity-frequency jitter width
  double escape_probability = 0.0;
  double pulse_duration = 80e-6;
  int jitter_shots = 16;                // per-shot static jitter samples
  double time_step = 10e-9;             // master-equation RK4 step

  void validate() const;
};

struct IonDriveContext {
  double reduced_rabi = kTwoPi * 53.2e6;  // Omega_i^r (rad/s)
  double displacement = 0.0;              // z0 (m)
  double osc_amplitude = 0.0;             // A_com (m)
  double omega_z = kTwoPi * 358e3;        // rad/s
  double ripple_amplitude = 0.0;          // A_50 (m), quasi-static

  void validate() const;
};

/// Binned photon-emission probability density (per second) after the output
/// mirror, plus its integral P_c.
struct Wavepacket {
  double bin_width = 0.2e-6;          // s
  std::vector<double> density;        // 1/s
  double total_probability = 0.0;     // P_c <= P_esc
};

/// L = 2 pi / F, kappa = c L / (4 l), P_esc = T2 / L.
CavityParams cavity_derived_params(double finesse, double length, double t2);

/// Dispersive two-level relation: Delta = Omega^2 / (4 * stark_shift).
double stark_calibrate_detuning(double rabi, double stark_shift);

struct SpatialCoupling {
  double rabi;  // Omega(z)
  double g;     // g(z)
};

/// Omega(z) = Omega exp(-z^2/sigma^2);
/// g(z) = g cos(k z sin(phi)) exp(-(z cos(phi)/w0)^2), k = 2 pi / 854 nm.
SpatialCoupling spatial_coupling(double z, const RamanBeam& beam,
                                 const CavityGeometry& geometry, double g);

/// Integrates the effective Lambda-system master equation over the pulse
/// with the drive context's z(t) = A_com sin(omega_z t) + z0, averaging over
/// per-shot Gaussian cavity jitter. Deterministic given the seed;
/// independent of it when jitter_sigma == 0.
Wavepacket simulate_photon_generation(const PhotonSourceModel& model,
                                      const IonDriveContext& context,
                                      const CavityGeometry& geometry,
                                      const RamanBeam& beam,
                                      std::uint64_t seed);

/// P_c(z)/P_c(0) on the given displacement grid, resonance fixed at z = 0.
std::vector<double> efficiency_vs_displacement(const PhotonSourceModel& model,
                                               const IonDriveContext& context,
                                               const CavityGeometry& geometry,
                                               const RamanBeam& beam,
                                               std::span<const double> z_grid,
                                               std::uint64_t seed);

/// Mean of the +z and -z fractional efficiencies.
double symmetric_displacement_efficiency(const PhotonSourceModel& model,
                                         const IonDriveContext& context,
                                         const CavityGeometry& geometry,
                                         const RamanBeam& beam, double z,
                                         std::uint64_t seed);

/// P_c with z(t) = A sin(omega_z t) + z0 over P_c with A = z0 = 0.
double efficiency_with_oscillation(const PhotonSourceModel& model,
                                   const IonDriveContext& context,
                                   const CavityGeometry& geometry,
                                   const RamanBeam& beam, double osc_amplitude,
                                   double displacement, std::uint64_t seed);

/// 50 Hz ripple treated as quasi-static: fractional efficiency averaged over
/// one cycle of static displacements A_50 sin(u) around z0.
double efficiency_with_ripple(const PhotonSourceModel& model,
                              const IonDriveContext& context,
                              const CavityGeometry& geometry,
                              const RamanBeam& beam, double ripple_amplitude,
                              std::uint64_t seed, int phase_points = 16);

struct XiFit {
  double xi = 0.0;
  bool clamped = false;
};

/// Closed-form least squares of P_d against xi * P_c, clamped to [0, 1].
XiFit fit_detection_efficiency(std::span<const double> p_detected,
                               std::span<const double> p_cavity);

struct DetectionBudget {
  std::vector<double> path_totals;
  double xi_max = 0.0;  // mean of the path products
};

DetectionBudget detection_budget(
    const std::vector<std::vector<double>>& stage_efficiencies);

}  // namespace ionsim::photon
