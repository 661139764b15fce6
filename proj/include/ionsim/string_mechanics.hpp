#pragma once

#include <Eigen/Dense>
#include <ostream>
#include <vector>

#include "ionsim/constants.hpp"

namespace ionsim::mechanics {

struct TrapConfiguration {
  int ion_count = 10;
  double omega_z = kTwoPi * 358e3;        // axial COM, rad/s
  double omega_rx = kTwoPi * 2.0940e6;    // radial COM (x), rad/s
  double omega_ry = kTwoPi * 2.0469e6;    // radial COM (y), rad/s

  void validate() const;
};

/// Equilibrium positions along the trap axis, sorted ascending, centre of
/// mass at zero. `length_scale` is the Coulomb length
/// l = (e^2 / (4 pi eps0 m omega_z^2))^(1/3).
struct IonString {
  std::vector<double> positions;  // m
  double length_scale = 0.0;      // m

  int size() const { return static_cast<int>(positions.size()); }
  double span() const { return positions.back() - positions.front(); }
};

enum class Branch { Axial, RadialX, RadialY };

const char* branch_name(Branch b);

/// Normal modes of one branch. Frequencies ascending; eigenvector columns
/// orthonormal, sign-fixed so the largest-magnitude entry is positive.
struct ModeSet {
  Branch branch = Branch::Axial;
  std::vector<double> frequencies;  // rad/s, ascending
  Eigen::MatrixXd eigenvectors;     // column m = mode m

  int ion_count() const { return static_cast<int>(frequencies.size()); }
};

struct ThermalState {
  std::vector<double> nbar;
  double temperature = 0.0;  // K
};

struct LambDickeTable {
  Eigen::MatrixXd eta;           // eta(i, m) >= 0
  double wavelength = 393e-9;    // m
  double projection_angle = 0.0; // rad
  bool lamb_dicke_warning = false;  // any eta > 0.3
};

enum class RabiMethod { LambDickeProduct, LaguerreThermal };

IonString equilibrium_positions(const TrapConfiguration& config,
                                const PhysicalConstants& constants);

ModeSet normal_modes(const IonString& string, const TrapConfiguration& config,
                     Branch branch);

/// eta_{i,m} = (2 pi / lambda) b_{i,m} sqrt(hbar / (2 M omega_m)) cos(theta_k)
/// evaluated in the mass-normalised convention: M is the total string mass
/// N m with eigenvectors scaled to sum b^2 = N, which reduces to the
/// single-ion mass with the orthonormal eigenvectors stored in ModeSet.
LambDickeTable lamb_dicke_factors(const ModeSet& modes, double wavelength,
                                  double theta_k,
                                  const PhysicalConstants& constants);

/// Solves hbar omega_ref / (kB T) = ln(1 + 1/nbar_ref) for T, then evaluates
/// the Bose-Einstein occupation of every mode at that temperature.
ThermalState thermal_occupations(double nbar_ref, double omega_ref,
                                 const ModeSet& modes,
                                 const PhysicalConstants& constants);

std::vector<double> reduced_rabi(double omega, const LambDickeTable& table,
                                 const ThermalState& thermal,
                                 RabiMethod method);

/// One-mode thermally averaged carrier coupling (Debye-Waller factor).
/// Exposed for the cross-method agreement tests.
double thermal_carrier_factor(double eta, double nbar, double tail_tolerance = 1e-8);

/// Reporting for the COM-mode Lamb-Dicke scale ambiguity: the value in the
/// convention used here, the value with total mass and orthonormal
/// eigenvectors, and the ratio of the former to the 2.8e-3 reference.
struct ComEtaReport {
  double eta_com = 0.0;
  double eta_com_total_mass_orthonormal = 0.0;
  double ratio_to_reference = 0.0;
  static constexpr double kReference = 0.0028;
};

ComEtaReport com_eta_report(const LambDickeTable& table, const ModeSet& modes);

/// CSV columns: branch, mode_index, freq_hz, b_1..b_N. Several mode sets can
/// share one file by suppressing the header on all but the first.
void write_mode_set_csv(const ModeSet& modes, std::ostream& out,
                        bool with_header = true);

}  // namespace ionsim::mechanics
