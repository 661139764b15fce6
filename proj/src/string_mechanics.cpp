#include "ionsim/string_mechanics.hpp"

#include <algorithm>
#include <cmath>

#include "ionsim/error.hpp"

namespace ionsim::mechanics {

void TrapConfiguration::validate() const {
  if (ion_count < 1) {
    throw Error(ErrorCode::InvalidInput, "ion count must be >= 1");
  }
  if (omega_z <= 0 || omega_rx <= 0 || omega_ry <= 0) {
    throw Error(ErrorCode::InvalidInput, "trap frequencies must be positive");
  }
}

const char* branch_name(Branch b) {
  switch (b) {
    case Branch::Axial: return "axial";
    case Branch::RadialX: return "radial-x";
    case Branch::RadialY: return "radial-y";
  }
  return "?";
}

namespace {

// Dimensionless force on ion i: F_i = -u_i + sum_j sign(u_i-u_j)/(u_i-u_j)^2,
// zero at equilibrium.
Eigen::VectorXd force(const Eigen::VectorXd& u) {
  const int n = static_cast<int>(u.size());
  Eigen::VectorXd f = -u;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = u[i] - u[j];
      f[i] += (d > 0 ? 1.0 : -1.0) / (d * d);
    }
  }
  return f;
}

Eigen::MatrixXd force_jacobian(const Eigen::VectorXd& u) {
  const int n = static_cast<int>(u.size());
  Eigen::MatrixXd jac = -Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d3 = std::pow(std::abs(u[i] - u[j]), 3);
      jac(i, i) -= 2.0 / d3;
      jac(i, j) += 2.0 / d3;
    }
  }
  return jac;
}

// Interaction matrix with zero row sums; axial Hessian = I + 2C, radial
// Hessian = (omega_r/omega_z)^2 I - C, both in units of m omega_z^2.
Eigen::MatrixXd coupling_matrix(const Eigen::VectorXd& u) {
  const int n = static_cast<int>(u.size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double diag = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d3 = std::pow(std::abs(u[i] - u[j]), 3);
      c(i, j) = -1.0 / d3;
      diag += 1.0 / d3;
    }
    c(i, i) = diag;
  }
  return c;
}

}  // namespace

IonString equilibrium_positions(const TrapConfiguration& config,
                                const PhysicalConstants& constants) {
  config.validate();
  constants.validate();
  const int n = config.ion_count;
  const double scale = std::cbrt(
      constants.coulomb() / (constants.ion_mass * config.omega_z * config.omega_z));

  IonString out;
  out.length_scale = scale;
  if (n == 1) {
    out.positions = {0.0};
    return out;
  }

  // Quasi-uniform initial guess; the damped Newton iteration is then
  // well-conditioned for all string sizes of interest.
  Eigen::VectorXd u(n);
  const double half_span = 0.63 * std::pow(n, 0.57);
  for (int i = 0; i < n; ++i) {
    u[i] = -half_span + 2.0 * half_span * i / (n - 1);
  }

  constexpr int kMaxIterations = 300;
  constexpr double kTolerance = 1e-13;
  bool converged = false;
  Eigen::VectorXd f = force(u);
  for (int it = 0; it < kMaxIterations; ++it) {
    if (f.lpNorm<Eigen::Infinity>() < kTolerance) {
      converged = true;
      break;
    }
    const Eigen::VectorXd step = force_jacobian(u).lu().solve(f);
    double lambda = 1.0;
    const double f0 = f.norm();
    for (int back = 0; back < 30; ++back) {
      Eigen::VectorXd trial = u - lambda * step;
      std::sort(trial.begin(), trial.end());
      const Eigen::VectorXd ft = force(trial);
      if (ft.norm() < f0 || lambda < 1e-6) {
        u = trial;
        f = ft;
        break;
      }
      lambda *= 0.5;
    }
  }
  if (!converged) {
    throw Error(ErrorCode::SolverFailure,
                "equilibrium solver did not converge");
  }

  // Symmetrise: the potential is even, so the solution is too. This pins the
  // centre of mass exactly at zero.
  Eigen::VectorXd sym(n);
  for (int i = 0; i < n; ++i) sym[i] = 0.5 * (u[i] - u[n - 1 - i]);
  f = force(sym);
  if (f.lpNorm<Eigen::Infinity>() > 1e-9) {
    throw Error(ErrorCode::SolverFailure, "equilibrium residual force too large");
  }

  out.positions.resize(n);
  for (int i = 0; i < n; ++i) out.positions[i] = sym[i] * scale;
  return out;
}

ModeSet normal_modes(const IonString& string, const TrapConfiguration& config,
                     Branch branch) {
  const int n = string.size();
  if (n < 1 || string.length_scale <= 0) {
    throw Error(ErrorCode::InvalidInput, "invalid ion string");
  }
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u[i] = string.positions[i] / string.length_scale;

  Eigen::MatrixXd hessian;
  if (branch == Branch::Axial) {
    hessian = Eigen::MatrixXd::Identity(n, n) + 2.0 * coupling_matrix(u);
  } else {
    const double omega_r = branch == Branch::RadialX ? config.omega_rx
                                                     : config.omega_ry;
    const double gamma = omega_r / config.omega_z;
    hessian = gamma * gamma * Eigen::MatrixXd::Identity(n, n) -
              coupling_matrix(u);
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(hessian);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::SolverFailure, "mode eigensolver failed");
  }

  ModeSet out;
  out.branch = branch;
  out.frequencies.resize(n);
  out.eigenvectors = solver.eigenvectors();
  for (int m = 0; m < n; ++m) {
    const double lambda = solver.eigenvalues()[m];
    if (lambda <= 0.0) {
      throw Error(ErrorCode::UnstableConfiguration,
                  "negative mode eigenvalue: linear configuration unstable");
    }
    out.frequencies[m] = config.omega_z * std::sqrt(lambda);
    // Deterministic sign: largest-magnitude component positive.
    int imax = 0;
    out.eigenvectors.col(m).cwiseAbs().maxCoeff(&imax);
    if (out.eigenvectors(imax, m) < 0) out.eigenvectors.col(m) *= -1.0;
  }
  return out;
}

LambDickeTable lamb_dicke_factors(const ModeSet& modes, double wavelength,
                                  double theta_k,
                                  const PhysicalConstants& constants) {
  if (wavelength <= 0) {
    throw Error(ErrorCode::InvalidInput, "wavelength must be positive");
  }
  const int n = modes.ion_count();
  LambDickeTable out;
  out.wavelength = wavelength;
  out.projection_angle = theta_k;
  out.eta.resize(n, n);
  const double k = kTwoPi / wavelength;
  const double cos_theta = std::cos(theta_k);
  for (int m = 0; m < n; ++m) {
    const double x0 = std::sqrt(constants.hbar /
                                (2.0 * constants.ion_mass * modes.frequencies[m]));
    for (int i = 0; i < n; ++i) {
      out.eta(i, m) = std::abs(k * modes.eigenvectors(i, m) * x0 * cos_theta);
      if (out.eta(i, m) > 0.3) out.lamb_dicke_warning = true;
    }
  }
  return out;
}

ThermalState thermal_occupations(double nbar_ref, double omega_ref,
                                 const ModeSet& modes,
                                 const PhysicalConstants& constants) {
  if (nbar_ref <= 0) {
    throw Error(ErrorCode::InvalidInput, "invalid reference occupation");
  }
  if (omega_ref <= 0) {
    throw Error(ErrorCode::InvalidInput, "invalid reference frequency");
  }
  ThermalState out;
  out.temperature = constants.hbar * omega_ref /
                    (constants.boltzmann * std::log1p(1.0 / nbar_ref));
  out.nbar.resize(modes.ion_count());
  for (int m = 0; m < modes.ion_count(); ++m) {
    const double x = constants.hbar * modes.frequencies[m] /
                     (constants.boltzmann * out.temperature);
    out.nbar[m] = 1.0 / std::expm1(x);
  }
  return out;
}

double thermal_carrier_factor(double eta, double nbar, double tail_tolerance) {
  const double x = eta * eta;
  if (nbar <= 0.0) return std::exp(-0.5 * x);
  const double q = nbar / (1.0 + nbar);
  double weight = 1.0 / (1.0 + nbar);
  double cumulative = 0.0;
  double sum = 0.0;
  double lm1 = 0.0;  // L_{n-1}(x)
  double l = 1.0;    // L_n(x)
  constexpr long kMaxTerms = 2000000;
  for (long n = 0; n < kMaxTerms; ++n) {
    if (n > 0) {
      const double next = ((2.0 * n - 1.0 - x) * l - (n - 1.0) * lm1) / n;
      lm1 = l;
      l = next;
    }
    sum += weight * l;
    cumulative += weight;
    if (1.0 - cumulative < tail_tolerance) {
      return std::exp(-0.5 * x) * sum;
    }
    weight *= q;
  }
  throw Error(ErrorCode::AccuracyLoss,
              "thermal carrier sum did not converge");
}

std::vector<double> reduced_rabi(double omega, const LambDickeTable& table,
                                 const ThermalState& thermal,
                                 RabiMethod method) {
  if (omega <= 0) {
    throw Error(ErrorCode::InvalidInput, "carrier Rabi frequency must be positive");
  }
  const int n = static_cast<int>(table.eta.rows());
  const int n_modes = static_cast<int>(table.eta.cols());
  if (static_cast<int>(thermal.nbar.size()) != n_modes) {
    throw Error(ErrorCode::InvalidInput, "thermal state does not match mode count");
  }
  std::vector<double> out(n, omega);
  for (int i = 0; i < n; ++i) {
    for (int m = 0; m < n_modes; ++m) {
      const double factor =
          method == RabiMethod::LambDickeProduct
              ? 1.0 - table.eta(i, m) * table.eta(i, m) * thermal.nbar[m]
              : thermal_carrier_factor(table.eta(i, m), thermal.nbar[m]);
      out[i] *= factor;
    }
  }
  return out;
}

ComEtaReport com_eta_report(const LambDickeTable& table, const ModeSet& modes) {
  const int n = modes.ion_count();
  // COM mode: highest frequency on radial branches, lowest on axial.
  const int com = modes.branch == Branch::Axial ? 0 : n - 1;
  ComEtaReport out;
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += table.eta(i, com);
  out.eta_com = mean / n;
  out.eta_com_total_mass_orthonormal = out.eta_com / std::sqrt(double(n));
  out.ratio_to_reference = out.eta_com / ComEtaReport::kReference;
  return out;
}

void write_mode_set_csv(const ModeSet& modes, std::ostream& out,
                        bool with_header) {
  if (with_header) {
    out << "branch,mode_index,freq_hz";
    for (int i = 1; i <= modes.ion_count(); ++i) out << ",b_" << i;
    out << "\n";
  }
  char buf[32];
  for (int m = 0; m < modes.ion_count(); ++m) {
    out << branch_name(modes.branch) << "," << (m + 1);
    std::snprintf(buf, sizeof buf, "%.10g", modes.frequencies[m] / kTwoPi);
    out << "," << buf;
    for (int i = 0; i < modes.ion_count(); ++i) {
      std::snprintf(buf, sizeof buf, "%.10g", modes.eigenvectors(i, m));
      out << "," << buf;
    }
    out << "\n";
  }
}

}  // namespace ionsim::mechanics
