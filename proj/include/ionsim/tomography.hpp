#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "ionsim/two_qubit.hpp"

namespace ionsim::tomo {

/// Pauli measurement bases per setting: setting = ion_basis * 3 + photon_basis
/// with basis index 0 = X, 1 = Y, 2 = Z. Pauli index (1..3) of each side:
inline int ion_pauli(int setting) { return setting / 3 + 1; }
inline int photon_pauli(int setting) { return setting % 3 + 1; }
inline constexpr int kSettings = 9;

/// Outcome code: bit 1 = ion result, bit 0 = photon result, 0 meaning the +1
/// eigenvalue. Order (++, +-, -+, --) = codes 0..3.
inline double outcome_sign_ion(int outcome) { return outcome & 2 ? -1.0 : 1.0; }
inline double outcome_sign_photon(int outcome) { return outcome & 1 ? -1.0 : 1.0; }

/// Conditioned coincidence counts for every (ion, photon-window) pair and
/// measurement setting. Counts are stored as doubles so that exact synthetic
/// tables can be represented; file IO rounds to integers.
class CountTable {
 public:
  CountTable(int n_ion = 10, int n_window = 10);

  double& at(int setting, int ion, int window, int outcome);
  double at(int setting, int ion, int window, int outcome) const;
  double setting_total(int setting, int ion, int window) const;

  int ion_count() const { return n_ion_; }
  int window_count() const { return n_window_; }

  /// CSV columns: setting_id,ion_index,photon_window,outcome,count
  void save_csv(std::ostream& out) const;
  static CountTable load_csv(std::istream& in);

 private:
  int index(int setting, int ion, int window, int outcome) const;
  int n_ion_, n_window_;
  std::vector<double> counts_;
};

enum class ReconstructionMethod {
  LinearInversion,    // deterministic, used by the acceptance suite
  MaximumLikelihood,  // iterative R rho R fixed point
};

/// Correction for unequal detector-path efficiencies; counts on each photon
/// channel are divided by the respective efficiency before reconstruction.
struct PathCalibration {
  double plus = 1.0;   // transmission-port (outcome +) efficiency
  double minus = 1.0;  // reflection-port (outcome -) efficiency
};

/// Tomographic reconstruction for one (ion, photon-window) pair. The default
/// is linear inversion followed by projection to the nearest physical state.
/// Throws IncompleteData if any setting has no events for the pair.
TwoQubitState reconstruct(
    const CountTable& counts, int ion, int window,
    ReconstructionMethod method = ReconstructionMethod::LinearInversion,
    const PathCalibration& paths = {});

/// Projection to the closest positive-semidefinite unit-trace matrix in
/// Frobenius norm (eigenvalue clipping with uniform redistribution).
TwoQubitState project_to_physical(const Matrix4cd& rho);

/// Wootters concurrence.
double concurrence(const TwoQubitState& state);

/// Uhlmann fidelity (trace sqrt(sqrt(rho) sigma sqrt(rho)))^2.
double fidelity(const TwoQubitState& rho, const TwoQubitState& sigma);

/// <psi| rho |psi> for a pure target.
double fidelity_to_pure(const TwoQubitState& rho, const Vector4cd& psi);

struct ZRotationResult {
  std::vector<double> angles;  // first angle gauge-fixed to 0, in (-pi, pi]
  double objective = 0.0;      // sum of pairwise fidelities (m != n)
};

/// Finds ion-side Z rotations maximising the pairwise-fidelity sum over all
/// state pairs. Multi-start Nelder-Mead over the angle torus.
ZRotationResult optimize_z_rotations(const std::vector<TwoQubitState>& states,
                                     int starts = 8, std::uint64_t seed = 1);

struct PhotonUnitaryResult {
  std::array<double, 3> params{};  // Rz(a) Ry(b) Rz(c)
  Matrix2cd unitary = Matrix2cd::Identity();
  std::vector<double> bell_fidelities;
  double objective = 0.0;
};

/// Single photon-side unitary maximising the summed fidelity to |psi(0)>.
PhotonUnitaryResult optimize_photon_unitary(
    const std::vector<TwoQubitState>& rotated_states, int starts = 8,
    std::uint64_t seed = 1);

struct MonteCarloErrors {
  Eigen::MatrixXd concurrence_stderr;      // n_ion x n_window
  std::vector<double> fidelity_stderr;     // matched pairs, Bell frame
  int skipped_pairs = 0;                   // zero-count pairs left out
};

/// Multinomial resampling of every (pair, setting) cell, full reconstruction
/// per replicate; fidelities evaluated in the fixed Bell frame given by
/// `z_angles` and `photon_unitary`.
MonteCarloErrors monte_carlo_errors(const CountTable& counts, int replicates,
                                    std::uint64_t seed,
                                    const std::vector<double>& z_angles,
                                    const Matrix2cd& photon_unitary);

/// Born-rule outcome probabilities of `state` for one setting (helper shared
/// with the synthetic pipeline and tests).
std::array<double, 4> outcome_probabilities(const TwoQubitState& state,
                                            int setting);

}  // namespace ionsim::tomo
