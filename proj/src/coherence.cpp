#include "ionsim/coherence.hpp"

#include <cmath>

#include "ionsim/error.hpp"

namespace ionsim::coherence {

ZeemanSensitivity ZeemanSensitivity::from_levels(
    double m1, double g1, double m2, double g2,
    const PhysicalConstants& constants) {
  const double per_tesla = (m2 * g2 - m1 * g1) * constants.bohr_magneton / kPlanck;
  return ZeemanSensitivity{per_tesla * 1e-4};
}

ZeemanSensitivity ZeemanSensitivity::s_to_d(const PhysicalConstants& c) {
  return from_levels(-0.5, 2.0, -2.5, 1.2, c);
}

ZeemanSensitivity ZeemanSensitivity::s_to_dprime(const PhysicalConstants& c) {
  return from_levels(-0.5, 2.0, -1.5, 1.2, c);
}

ZeemanSensitivity ZeemanSensitivity::d_to_dprime(const PhysicalConstants& c) {
  return from_levels(-2.5, 1.2, -1.5, 1.2, c);
}

double zeeman_frequency(const ZeemanSensitivity& sensitivity, double b_gauss) {
  return sensitivity.hz_per_gauss * b_gauss;
}

ShuttleSchedule ShuttleSchedule::for_string(
    std::span<const double> ion_positions) {
  ShuttleSchedule s;
  s.trap_positions.reserve(ion_positions.size());
  for (double x : ion_positions) s.trap_positions.push_back(-x);
  return s;
}

double ShuttleSchedule::storage_time(int ion_index) const {
  const int n = static_cast<int>(trap_positions.size());
  if (ion_index < 1 || ion_index > n) {
    throw Error(ErrorCode::InvalidInput, "ion index out of range");
  }
  return post_raman + dwell * (n - ion_index) + final_dwell;
}

std::vector<double> accumulate_phases(const ShuttleSchedule& schedule,
                                      const FieldModel& field,
                                      std::span<const double> ion_positions,
                                      const PhysicalConstants& constants) {
  const int n = static_cast<int>(schedule.trap_positions.size());
  if (static_cast<int>(ion_positions.size()) != n) {
    throw Error(ErrorCode::InvalidInput, "schedule and string sizes differ");
  }
  const double s_dd = ZeemanSensitivity::d_to_dprime(constants).hz_per_gauss;
  const double grad = field.gradient_g_per_m;  // G/m

  std::vector<double> phases(n);
  for (int j = 0; j < n; ++j) {
    // Field error relative to calibration while the trap sits at position k:
    // grad * (ion lab position) - B_mis.
    auto detuning_hz = [&](int k) {
      const double lab = schedule.trap_positions[k] + ion_positions[j];
      return s_dd * (grad * lab - field.mis_av_gauss);
    };
    double phase = schedule.post_raman * detuning_hz(j);
    for (int k = j + 1; k < n; ++k) phase += schedule.dwell * detuning_hz(k);
    phase += schedule.final_dwell * detuning_hz(0);
    phases[j] = kTwoPi * phase;
  }
  return phases;
}

double phase_flip_probability(double t, double sigma) {
  if (sigma <= 0) throw Error(ErrorCode::InvalidInput, "sigma must be positive");
  return std::exp(-t * t / (2.0 * sigma * sigma));
}

TwoQubitState dephase(const TwoQubitState& rho, double t, double sigma) {
  const double p = phase_flip_probability(t, sigma);
  const Matrix4cd sz = pauli_pair(3, 0);
  TwoQubitState out;
  out.rho = 0.5 * (1.0 + p) * rho.rho + 0.5 * (1.0 - p) * sz * rho.rho * sz;
  return out;
}

std::vector<double> fidelity_vs_ion_index(const TwoQubitState& rho_last,
                                          std::span<const double> storage_times,
                                          double sigma, double reference_time) {
  const Vector4cd psi = bell_ket(0.0);
  std::vector<double> out;
  out.reserve(storage_times.size());
  for (double t : storage_times) {
    const double tau = std::abs(t - reference_time);
    const TwoQubitState evolved = dephase(rho_last, tau, sigma);
    out.push_back(std::real((psi.adjoint() * evolved.rho * psi)(0, 0)));
  }
  return out;
}

RamseyFit ramsey_contrast_fit(std::span<const double> times,
                              std::span<const double> contrasts) {
  const std::size_t n = times.size();
  if (n < 3 || contrasts.size() != n) {
    throw Error(ErrorCode::InvalidInput, "need >= 3 points");
  }
  for (double c : contrasts) {
    if (c < 0.0 || c > 1.0) {
      throw Error(ErrorCode::InvalidInput, "contrast outside [0, 1]");
    }
  }
  auto sum_sq = [&](double sigma) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = contrasts[i] - phase_flip_probability(times[i], sigma);
      s += r * r;
    }
    return s;
  };

  // Bracket by coarse logarithmic scan, then golden-section refine.
  double t_max = 0;
  for (double t : times) t_max = std::max(t_max, std::abs(t));
  if (t_max <= 0) throw Error(ErrorCode::ConvergenceFailure, "degenerate times");
  double best = t_max, best_val = sum_sq(t_max);
  for (int k = -40; k <= 40; ++k) {
    const double sigma = t_max * std::pow(10.0, k / 10.0);
    const double v = sum_sq(sigma);
    if (v < best_val) {
      best_val = v;
      best = sigma;
    }
  }
  double a = best / 2.0, b = best * 2.0;
  const double gr = 0.61803398874989485;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = sum_sq(x1), f2 = sum_sq(x2);
  for (int it = 0; it < 200; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = sum_sq(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = sum_sq(x2);
    }
    if ((b - a) < 1e-12 * best) break;
  }
  RamseyFit fit;
  fit.sigma = 0.5 * (a + b);
  if (!std::isfinite(fit.sigma) || fit.sigma <= 0) {
    throw Error(ErrorCode::ConvergenceFailure, "contrast fit did not converge");
  }
  // Linearised standard error from the Jacobian.
  double jj = 0;
  const double s3 = fit.sigma * fit.sigma * fit.sigma;
  for (std::size_t i = 0; i < n; ++i) {
    const double j = phase_flip_probability(times[i], fit.sigma) *
                     times[i] * times[i] / s3;
    jj += j * j;
  }
  const double dof = n > 2 ? static_cast<double>(n - 2) : 1.0;
  fit.sigma_stderr = jj > 0 ? std::sqrt(sum_sq(fit.sigma) / dof / jj) : 0.0;
  return fit;
}

}  // namespace ionsim::coherence
