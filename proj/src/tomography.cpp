#include "ionsim/tomography.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "ionsim/csv.hpp"
#include "ionsim/nelder_mead.hpp"
#include "ionsim/rng.hpp"

namespace ionsim::tomo {

CountTable::CountTable(int n_ion, int n_window)
    : n_ion_(n_ion),
      n_window_(n_window),
      counts_(static_cast<std::size_t>(kSettings) * n_ion * n_window * 4, 0.0) {}

int CountTable::index(int setting, int ion, int window, int outcome) const {
  if (setting < 0 || setting >= kSettings || ion < 1 || ion > n_ion_ ||
      window < 1 || window > n_window_ || outcome < 0 || outcome > 3) {
    throw Error(ErrorCode::InvalidInput, "count-table index out of range");
  }
  return ((setting * n_ion_ + (ion - 1)) * n_window_ + (window - 1)) * 4 + outcome;
}

double& CountTable::at(int setting, int ion, int window, int outcome) {
  return counts_[index(setting, ion, window, outcome)];
}

double CountTable::at(int setting, int ion, int window, int outcome) const {
  return counts_[index(setting, ion, window, outcome)];
}

double CountTable::setting_total(int setting, int ion, int window) const {
  double s = 0;
  for (int o = 0; o < 4; ++o) s += at(setting, ion, window, o);
  return s;
}

void CountTable::save_csv(std::ostream& out) const {
  out << "setting_id,ion_index,photon_window,outcome,count\n";
  for (int s = 0; s < kSettings; ++s) {
    for (int i = 1; i <= n_ion_; ++i) {
      for (int w = 1; w <= n_window_; ++w) {
        for (int o = 0; o < 4; ++o) {
          out << s << "," << i << "," << w << "," << o << ","
              << static_cast<long long>(std::llround(at(s, i, w, o))) << "\n";
        }
      }
    }
  }
}

CountTable CountTable::load_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::IoError, "empty count-table file");
  }
  int max_ion = 0, max_window = 0;
  struct Row { int s, i, w, o; double c; };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r{};
    if (std::sscanf(line.c_str(), "%d,%d,%d,%d,%lf", &r.s, &r.i, &r.w, &r.o,
                    &r.c) != 5) {
      throw Error(ErrorCode::IoError, "malformed count-table row: " + line);
    }
    max_ion = std::max(max_ion, r.i);
    max_window = std::max(max_window, r.w);
    rows.push_back(r);
  }
  CountTable t(std::max(max_ion, 1), std::max(max_window, 1));
  for (const Row& r : rows) t.at(r.s, r.i, r.w, r.o) += r.c;
  return t;
}

std::array<double, 4> outcome_probabilities(const TwoQubitState& state,
                                            int setting) {
  const Matrix2cd pi_ion[2] = {
      0.5 * (pauli(0) + pauli(ion_pauli(setting))),
      0.5 * (pauli(0) - pauli(ion_pauli(setting)))};
  const Matrix2cd pi_ph[2] = {
      0.5 * (pauli(0) + pauli(photon_pauli(setting))),
      0.5 * (pauli(0) - pauli(photon_pauli(setting)))};
  std::array<double, 4> out{};
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const Matrix4cd proj = kron2(pi_ion[a], pi_ph[b]);
      out[a * 2 + b] = std::max(0.0, std::real((proj * state.rho).trace()));
    }
  }
  return out;
}

TwoQubitState project_to_physical(const Matrix4cd& rho_in) {
  Matrix4cd herm = 0.5 * (rho_in + rho_in.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix4cd> es(herm);
  Eigen::Vector4d lam = es.eigenvalues();  // ascending
  const double trace = lam.sum();
  if (std::abs(trace) < 1e-14) {
    throw Error(ErrorCode::DegenerateFit, "zero-trace matrix cannot be projected");
  }
  lam /= trace;

  // Clip negative eigenvalues from the bottom, spreading the deficit
  // uniformly over the kept ones; this is the Frobenius-nearest PSD
  // unit-trace spectrum.
  int k = 0;
  while (k < 4) {
    double tail = 0;
    for (int i = k; i < 4; ++i) tail += lam[i];
    const double shift = (1.0 - tail) / (4 - k);
    if (lam[k] + shift < 0.0) {
      ++k;
    } else {
      for (int i = 0; i < k; ++i) lam[i] = 0.0;
      for (int i = k; i < 4; ++i) lam[i] += shift;
      break;
    }
  }
  if (k == 4) {
    throw Error(ErrorCode::DegenerateFit, "projection failed: empty spectrum");
  }
  TwoQubitState out;
  out.rho = Matrix4cd::Zero();
  for (int i = 0; i < 4; ++i) {
    out.rho += lam[i] * es.eigenvectors().col(i) *
               es.eigenvectors().col(i).adjoint();
  }
  return out;
}

namespace {

// Path-efficiency corrected counts for one pair, indexed [setting][outcome].
std::array<std::array<double, 4>, kSettings> corrected_counts(
    const CountTable& counts, int ion, int window,
    const PathCalibration& paths) {
  if (paths.plus <= 0 || paths.minus <= 0) {
    throw Error(ErrorCode::InvalidInput, "path efficiencies must be positive");
  }
  std::array<std::array<double, 4>, kSettings> out{};
  double total_all = 0.0;
  for (int s = 0; s < kSettings; ++s) {
    double n = 0;
    for (int o = 0; o < 4; ++o) {
      const double eff = (o & 1) ? paths.minus : paths.plus;
      out[s][o] = counts.at(s, ion, window, o) / eff;
      n += out[s][o];
    }
    total_all += n;
    if (n <= 0) {
      throw Error(ErrorCode::IncompleteData,
                  "setting " + std::to_string(s) + " has no events for pair (" +
                      std::to_string(ion) + "," + std::to_string(window) + ")");
    }
  }
  if (total_all <= 0) {
    throw Error(ErrorCode::DegenerateFit, "all-zero count table");
  }
  return out;
}

TwoQubitState reconstruct_linear(
    const std::array<std::array<double, 4>, kSettings>& counts) {
  // Pauli expectation values; T[0][0] = 1.
  double t[4][4] = {};
  t[0][0] = 1.0;
  for (int s = 0; s < kSettings; ++s) {
    double n = 0;
    for (int o = 0; o < 4; ++o) n += counts[s][o];
    double e_joint = 0, e_ion = 0, e_photon = 0;
    for (int o = 0; o < 4; ++o) {
      const double w = counts[s][o] / n;
      e_joint += outcome_sign_ion(o) * outcome_sign_photon(o) * w;
      e_ion += outcome_sign_ion(o) * w;
      e_photon += outcome_sign_photon(o) * w;
    }
    t[ion_pauli(s)][photon_pauli(s)] = e_joint;
    // Marginals pooled over the other side's three settings.
    t[ion_pauli(s)][0] += e_ion / 3.0;
    t[0][photon_pauli(s)] += e_photon / 3.0;
  }

  Matrix4cd rho = Matrix4cd::Zero();
  for (int k = 0; k < 4; ++k) {
    for (int l = 0; l < 4; ++l) {
      rho += 0.25 * t[k][l] * pauli_pair(k, l);
    }
  }
  return project_to_physical(rho);
}

TwoQubitState reconstruct_ml(
    const std::array<std::array<double, 4>, kSettings>& counts) {
  // Iterative R rho R maximisation of the multinomial likelihood.
  std::array<Matrix4cd, kSettings * 4> projector;
  std::array<double, kSettings * 4> frequency{};
  for (int s = 0; s < kSettings; ++s) {
    double n = 0;
    for (int o = 0; o < 4; ++o) n += counts[s][o];
    const Matrix2cd pi_ion[2] = {0.5 * (pauli(0) + pauli(ion_pauli(s))),
                                 0.5 * (pauli(0) - pauli(ion_pauli(s)))};
    const Matrix2cd pi_ph[2] = {0.5 * (pauli(0) + pauli(photon_pauli(s))),
                                0.5 * (pauli(0) - pauli(photon_pauli(s)))};
    for (int o = 0; o < 4; ++o) {
      projector[s * 4 + o] = kron2(pi_ion[(o >> 1) & 1], pi_ph[o & 1]);
      frequency[s * 4 + o] = counts[s][o] / (n * kSettings);
    }
  }

  Matrix4cd rho = 0.25 * Matrix4cd::Identity();
  constexpr int kMaxIterations = 2000;
  for (int it = 0; it < kMaxIterations; ++it) {
    Matrix4cd r = Matrix4cd::Zero();
    for (std::size_t k = 0; k < projector.size(); ++k) {
      if (frequency[k] <= 0) continue;
      const double p = std::real((projector[k] * rho).trace());
      r += frequency[k] / std::max(p, 1e-12) * projector[k];
    }
    Matrix4cd next = r * rho * r;
    next /= next.trace();
    const double delta = (next - rho).cwiseAbs().maxCoeff();
    rho = next;
    if (delta < 1e-12) break;
  }
  return project_to_physical(rho);
}

}  // namespace

TwoQubitState reconstruct(const CountTable& counts, int ion, int window,
                          ReconstructionMethod method,
                          const PathCalibration& paths) {
  const auto corrected = corrected_counts(counts, ion, window, paths);
  return method == ReconstructionMethod::LinearInversion
             ? reconstruct_linear(corrected)
             : reconstruct_ml(corrected);
}

namespace {

Matrix4cd matrix_sqrt_psd(const Matrix4cd& m) {
  Eigen::SelfAdjointEigenSolver<Matrix4cd> es(m);
  Matrix4cd out = Matrix4cd::Zero();
  for (int i = 0; i < 4; ++i) {
    const double lam = std::max(0.0, es.eigenvalues()[i]);
    out += std::sqrt(lam) * es.eigenvectors().col(i) *
           es.eigenvectors().col(i).adjoint();
  }
  return out;
}

}  // namespace

double concurrence(const TwoQubitState& state) {
  const Matrix4cd syy = pauli_pair(2, 2);
  const Matrix4cd rho_tilde = syy * state.rho.conjugate() * syy;
  const Matrix4cd sq = matrix_sqrt_psd(state.rho);
  Eigen::SelfAdjointEigenSolver<Matrix4cd> es(sq * rho_tilde * sq);
  std::array<double, 4> r{};
  for (int i = 0; i < 4; ++i) {
    r[i] = std::sqrt(std::max(0.0, es.eigenvalues()[i]));
  }
  std::sort(r.begin(), r.end(), std::greater<>());
  return std::max(0.0, r[0] - r[1] - r[2] - r[3]);
}

double fidelity(const TwoQubitState& rho, const TwoQubitState& sigma) {
  const Matrix4cd sq = matrix_sqrt_psd(rho.rho);
  Eigen::SelfAdjointEigenSolver<Matrix4cd> es(sq * sigma.rho * sq);
  double sum = 0;
  for (int i = 0; i < 4; ++i) {
    sum += std::sqrt(std::max(0.0, es.eigenvalues()[i]));
  }
  return std::min(1.0, sum * sum);
}

double fidelity_to_pure(const TwoQubitState& rho, const Vector4cd& psi) {
  return std::real((psi.adjoint() * rho.rho * psi)(0, 0));
}

namespace {

std::vector<double> random_start(Rng& rng, int dim) {
  std::vector<double> x(dim);
  for (double& v : x) v = (rng.uniform() - 0.5) * kTwoPi;
  return x;
}

}  // namespace

ZRotationResult optimize_z_rotations(const std::vector<TwoQubitState>& states,
                                     int starts, std::uint64_t seed) {
  const int n = static_cast<int>(states.size());
  if (n < 2) {
    throw Error(ErrorCode::InvalidInput, "need at least two states");
  }
  // Z rotations commute with the eigenbasis trick sqrt(U rho U+) =
  // U sqrt(rho) U+, so precompute the square roots once.
  std::vector<Matrix4cd> roots(n);
  for (int i = 0; i < n; ++i) roots[i] = matrix_sqrt_psd(states[i].rho);

  auto objective = [&](const std::vector<double>& angles9) {
    std::vector<Matrix4cd> rho_rot(n), root_rot(n);
    for (int i = 0; i < n; ++i) {
      const double a = i == 0 ? 0.0 : angles9[i - 1];
      const Matrix4cd u = ion_z_rotation(a);
      rho_rot[i] = u * states[i].rho * u.adjoint();
      root_rot[i] = u * roots[i] * u.adjoint();
    }
    double total = 0;
    for (int m = 0; m < n; ++m) {
      for (int k = m + 1; k < n; ++k) {
        Eigen::SelfAdjointEigenSolver<Matrix4cd> es(root_rot[m] * rho_rot[k] *
                                                    root_rot[m]);
        double f = 0;
        for (int i = 0; i < 4; ++i) {
          f += std::sqrt(std::max(0.0, es.eigenvalues()[i]));
        }
        total += 2.0 * f * f;  // ordered pairs counted both ways
      }
    }
    return -total;
  };

  ZRotationResult best;
  best.objective = -1e300;
  bool any_converged = false;
  Rng rng = Rng::stream(seed, {0x5a11});
  for (int s = 0; s < starts; ++s) {
    std::vector<double> x0 =
        s == 0 ? std::vector<double>(n - 1, 0.0) : random_start(rng, n - 1);
    // Simplex restarts from the running optimum sharpen the basin search.
    NelderMeadOptions opts;
    opts.initial_step = 0.7;
    NelderMeadResult r;
    for (int round = 0; round < 3; ++round) {
      r = nelder_mead(objective, x0, opts);
      x0 = r.x;
      opts.initial_step *= 0.1;
      if (r.converged && round > 0) break;
    }
    any_converged = any_converged || r.converged;
    if (-r.value > best.objective) {
      best.objective = -r.value;
      best.angles.assign(1, 0.0);
      for (double a : r.x) best.angles.push_back(wrap_angle(a));
    }
  }
  if (!any_converged) {
    throw Error(ErrorCode::OptimizationFailure,
                "rotation search stagnated in every start");
  }
  return best;
}

PhotonUnitaryResult optimize_photon_unitary(
    const std::vector<TwoQubitState>& rotated_states, int starts,
    std::uint64_t seed) {
  if (rotated_states.empty()) {
    throw Error(ErrorCode::InvalidInput, "no states to align");
  }
  const Vector4cd psi = bell_ket(0.0);

  auto objective = [&](const std::vector<double>& p) {
    const Matrix4cd u = kron2(Matrix2cd::Identity(),
                              one_qubit_unitary(p[0], p[1], p[2]));
    const Vector4cd target = u.adjoint() * psi;
    double total = 0;
    for (const auto& st : rotated_states) {
      total += std::real((target.adjoint() * st.rho * target)(0, 0));
    }
    return -total;
  };

  NelderMeadResult best;
  best.value = 1e300;
  bool any_converged = false;
  Rng rng = Rng::stream(seed, {0x07f1});
  for (int s = 0; s < starts; ++s) {
    std::vector<double> x0 = s == 0 ? std::vector<double>{0, 0, 0}
                                    : random_start(rng, 3);
    NelderMeadOptions opts;
    opts.initial_step = 0.8;
    NelderMeadResult r;
    for (int round = 0; round < 3; ++round) {
      r = nelder_mead(objective, x0, opts);
      x0 = r.x;
      opts.initial_step *= 0.1;
      if (r.converged && round > 0) break;
    }
    any_converged = any_converged || r.converged;
    if (r.value < best.value) best = r;
  }
  if (!any_converged) {
    throw Error(ErrorCode::OptimizationFailure,
                "photon-unitary search stagnated in every start");
  }

  PhotonUnitaryResult out;
  out.params = {best.x[0], best.x[1], best.x[2]};
  out.unitary = one_qubit_unitary(best.x[0], best.x[1], best.x[2]);
  out.objective = -best.value;
  const Matrix4cd u = kron2(Matrix2cd::Identity(), out.unitary);
  for (const auto& st : rotated_states) {
    TwoQubitState bell;
    bell.rho = u * st.rho * u.adjoint();
    out.bell_fidelities.push_back(fidelity_to_pure(bell, psi));
  }
  return out;
}

MonteCarloErrors monte_carlo_errors(const CountTable& counts, int replicates,
                                    std::uint64_t seed,
                                    const std::vector<double>& z_angles,
                                    const Matrix2cd& photon_unitary) {
  if (replicates < 2) {
    throw Error(ErrorCode::InvalidInput, "need at least two replicates");
  }
  const int ni = counts.ion_count();
  const int nw = counts.window_count();
  const Vector4cd psi = bell_ket(0.0);
  const Matrix4cd up = kron2(Matrix2cd::Identity(), photon_unitary);

  Eigen::MatrixXd c_sum = Eigen::MatrixXd::Zero(ni, nw);
  Eigen::MatrixXd c_sq = Eigen::MatrixXd::Zero(ni, nw);
  std::vector<double> f_sum(std::min(ni, nw), 0.0), f_sq(std::min(ni, nw), 0.0);
  int skipped = 0;

  for (int i = 1; i <= ni; ++i) {
    for (int w = 1; w <= nw; ++w) {
      // A pair is resampled only if every setting holds events.
      bool usable = true;
      long long totals[kSettings];
      for (int s = 0; s < kSettings; ++s) {
        totals[s] = std::llround(counts.setting_total(s, i, w));
        usable = usable && totals[s] > 0;
      }
      if (!usable) {
        ++skipped;
        continue;
      }
      Rng rng = Rng::stream(seed, {0xb007, static_cast<std::uint64_t>(i),
                                   static_cast<std::uint64_t>(w)});
      for (int r = 0; r < replicates; ++r) {
        CountTable resampled(1, 1);
        for (int s = 0; s < kSettings; ++s) {
          double cdf[4];
          double acc = 0;
          for (int o = 0; o < 4; ++o) {
            acc += counts.at(s, i, w, o);
            cdf[o] = acc;
          }
          for (long long k = 0; k < totals[s]; ++k) {
            const int o = rng.discrete_cdf(std::span<const double>(cdf, 4));
            resampled.at(s, 1, 1, o) += 1.0;
          }
        }
        const TwoQubitState st = reconstruct(resampled, 1, 1);
        const double c = concurrence(st);
        c_sum(i - 1, w - 1) += c;
        c_sq(i - 1, w - 1) += c * c;
        if (i == w && i <= static_cast<int>(f_sum.size()) &&
            i <= static_cast<int>(z_angles.size())) {
          const Matrix4cd uz = ion_z_rotation(z_angles[i - 1]);
          TwoQubitState bell;
          bell.rho = up * uz * st.rho * uz.adjoint() * up.adjoint();
          const double f = fidelity_to_pure(bell, psi);
          f_sum[i - 1] += f;
          f_sq[i - 1] += f * f;
        }
      }
    }
  }

  MonteCarloErrors out;
  out.skipped_pairs = skipped;
  const double n = replicates;
  out.concurrence_stderr =
      ((c_sq - c_sum.cwiseProduct(c_sum) / n) / (n - 1.0)).cwiseMax(0.0).cwiseSqrt();
  out.fidelity_stderr.resize(f_sum.size());
  for (std::size_t i = 0; i < f_sum.size(); ++i) {
    const double var = (f_sq[i] - f_sum[i] * f_sum[i] / n) / (n - 1.0);
    out.fidelity_stderr[i] = std::sqrt(std::max(0.0, var));
  }
  return out;
}

}  // namespace ionsim::tomo
