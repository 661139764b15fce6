#include "ionsim/shuttling.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>

#include "ionsim/error.hpp"

namespace ionsim::shuttle {

void VoltageStepProgram::validate() const {
  if (step_values.empty()) {
    throw Error(ErrorCode::InvalidInput, "program needs at least one value");
  }
  if (interval <= 0) {
    throw Error(ErrorCode::InvalidInput, "step interval must be positive");
  }
}

void FilterSpec::validate() const {
  if (order != 1 && order != 2) {
    throw Error(ErrorCode::InvalidInput, "filter order must be 1 or 2");
  }
  if (cutoff_hz <= 0) {
    throw Error(ErrorCode::InvalidInput, "filter cutoff must be positive");
  }
  if (order == 2 && zeta <= 0) {
    throw Error(ErrorCode::InvalidInput, "filter damping must be positive");
  }
}

std::vector<FilterSpec> default_filter_chain() {
  return {FilterSpec{1, 35e3, 1.0}, FilterSpec{2, 80e3, kCalibratedZeta}};
}

double StepSignal::value_at(double t) const {
  std::size_t k = 0;
  while (k < step_times.size() && t >= step_times[k]) ++k;
  return levels[k];
}

StepSignal synthesize_waveform(const VoltageStepProgram& program,
                               double total_span) {
  program.validate();
  StepSignal out;
  const auto& v = program.step_values;
  out.levels.push_back(0.0);
  if (v.size() == 1 || v.back() == v.front()) {
    // Constant program: constant signal.
    out.levels.assign(1, 0.0);
    out.end_time = 0.0;
    return out;
  }
  const double scale = total_span / (v.back() - v.front());
  for (std::size_t j = 1; j < v.size(); ++j) {
    out.step_times.push_back(static_cast<double>(j) * program.interval);
    out.levels.push_back((v[j] - v.front()) * scale);
  }
  out.end_time = out.step_times.back();
  return out;
}

namespace {

// Exact zero-order-hold propagation for one filter stage.
struct Stage {
  // First-order, or one of the two real poles of an overdamped biquad:
  // y' = (u - y)/tau.
  // Underdamped biquad handled as the full second-order state update.
  bool second_order = false;
  double alpha = 0.0;  // first order: exp(-dt/tau)
  // second order (zeta < 1): y'' + 2 zeta w0 y' + w0^2 y = w0^2 u
  double a11 = 0, a12 = 0, a21 = 0, a22 = 0;  // state transition
  double b1 = 0, b2 = 0;                      // forced response (unit u)
  double y = 0, yd = 0;

  double advance(double u) {
    if (!second_order) {
      y = u + (y - u) * alpha;
      return y;
    }
    const double ny = a11 * y + a12 * yd + b1 * u;
    const double nyd = a21 * y + a22 * yd + b2 * u;
    y = ny;
    yd = nyd;
    return y;
  }
};

double fastest_time_constant(const FilterSpec& f) {
  const double w0 = kTwoPi * f.cutoff_hz;
  if (f.order == 1) return 1.0 / w0;
  if (f.zeta >= 1.0) {
    const double fast = f.zeta * w0 + w0 * std::sqrt(f.zeta * f.zeta - 1.0);
    return 1.0 / fast;
  }
  return 1.0 / (f.zeta * w0);
}

void append_stages(std::vector<Stage>& stages, const FilterSpec& f, double dt) {
  f.validate();
  const double w0 = kTwoPi * f.cutoff_hz;
  if (f.order == 1) {
    Stage s;
    s.alpha = std::exp(-dt * w0);
    stages.push_back(s);
    return;
  }
  if (f.zeta >= 1.0) {
    // Two real poles; cascade of exact first-order stages.
    const double root = std::sqrt(f.zeta * f.zeta - 1.0);
    for (double p : {w0 * (f.zeta + root), w0 * (f.zeta - root)}) {
      Stage s;
      s.alpha = std::exp(-dt * p);
      stages.push_back(s);
    }
    return;
  }
  // Underdamped: exact matrix exponential of the (y, y') system.
  Stage s;
  s.second_order = true;
  const double wd = w0 * std::sqrt(1.0 - f.zeta * f.zeta);
  const double e = std::exp(-f.zeta * w0 * dt);
  const double c = std::cos(wd * dt), sn = std::sin(wd * dt);
  s.a11 = e * (c + f.zeta * w0 * sn / wd);
  s.a12 = e * sn / wd;
  s.a21 = -e * w0 * w0 * sn / wd;
  s.a22 = e * (c - f.zeta * w0 * sn / wd);
  // Forced response to constant input u = 1 from rest toward (1, 0).
  s.b1 = 1.0 - s.a11;
  s.b2 = -s.a21;
  stages.push_back(s);
}

}  // namespace

PositionCommand apply_filter_chain(const StepSignal& signal,
                                   std::span<const FilterSpec> filters,
                                   double dt, double tail) {
  if (dt <= 0) throw Error(ErrorCode::InvalidInput, "dt must be positive");
  for (const auto& f : filters) {
    const double tau = fastest_time_constant(f);
    // Stages much faster than the grid degenerate to exact pass-through;
    // only comparable time constants are genuinely under-resolved.
    if (dt > tau / 20.0 && tau > dt / 20.0) {
      throw Error(ErrorCode::SamplingError,
                  "dt does not resolve the filter cutoffs (need >= 20 samples "
                  "per time constant)");
    }
  }
  std::vector<Stage> stages;
  for (const auto& f : filters) append_stages(stages, f, dt);
  for (auto& s : stages) {
    s.y = signal.levels.front();
    s.yd = 0.0;
  }

  PositionCommand out;
  out.dt = dt;
  out.last_step_time = signal.end_time;
  const double t_end = signal.end_time + tail;
  const auto n = static_cast<std::size_t>(std::ceil(t_end / dt)) + 1;
  out.samples.resize(n);
  std::size_t next_step = 0;
  double level = signal.levels.front();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    while (next_step < signal.step_times.size() &&
           t >= signal.step_times[next_step] - 0.5 * dt) {
      level = signal.levels[next_step + 1];
      ++next_step;
    }
    double x = level;
    for (auto& s : stages) x = s.advance(x);
    out.samples[i] = x;
  }
  return out;
}

double residual_settling(double tau, double t) {
  if (tau <= 0) throw Error(ErrorCode::InvalidInput, "tau must be positive");
  if (t < 0) throw Error(ErrorCode::InvalidInput, "t must be non-negative");
  return std::exp(-t / tau);
}

ComTrajectory com_trajectory(const PositionCommand& command, double omega_z,
                             double extraction_delay) {
  if (omega_z <= 0) {
    throw Error(ErrorCode::InvalidInput, "omega_z must be positive");
  }
  if (command.samples.size() < 2) {
    throw Error(ErrorCode::InvalidInput, "empty position command");
  }
  const double period = kTwoPi / omega_z;
  // The command grid already resolves the filters; sub-step if it does not
  // resolve the trap period.
  const int substeps = std::max(1, static_cast<int>(std::ceil(
                                       command.dt / (period / 200.0))));
  const double h = command.dt / substeps;
  const double w2 = omega_z * omega_z;

  ComTrajectory out;
  out.dt = command.dt;
  out.z.resize(command.samples.size());
  double z = command.samples.front();
  double v = 0.0;
  out.z[0] = z;
  for (std::size_t i = 0; i + 1 < command.samples.size(); ++i) {
    const double c0 = command.samples[i];
    const double c1 = command.samples[i + 1];
    for (int s = 0; s < substeps; ++s) {
      const double f0 = (static_cast<double>(s)) / substeps;
      const double fm = (s + 0.5) / substeps;
      const double f1 = (static_cast<double>(s) + 1.0) / substeps;
      const double ca = c0 + (c1 - c0) * f0;
      const double cm = c0 + (c1 - c0) * fm;
      const double cb = c0 + (c1 - c0) * f1;
      const double k1z = v, k1v = -w2 * (z - ca);
      const double k2z = v + 0.5 * h * k1v, k2v = -w2 * (z + 0.5 * h * k1z - cm);
      const double k3z = v + 0.5 * h * k2v, k3v = -w2 * (z + 0.5 * h * k2z - cm);
      const double k4z = v + h * k3v, k4v = -w2 * (z + h * k3z - cb);
      z += h / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z);
      v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
      if (!std::isfinite(z) || !std::isfinite(v)) {
        throw Error(ErrorCode::ConvergenceFailure, "trajectory integration diverged");
      }
    }
    out.z[i + 1] = z;
  }

  // Extraction window: one trap period, extraction_delay after the last step.
  const auto i0 = static_cast<std::size_t>(
      std::round((command.last_step_time + extraction_delay) / command.dt));
  const auto i1 = i0 + static_cast<std::size_t>(std::round(period / command.dt));
  if (i1 >= command.samples.size()) {
    throw Error(ErrorCode::InvalidInput,
                "command tail too short for amplitude extraction");
  }
  double lo = 1e300, hi = -1e300, mean = 0.0;
  for (std::size_t i = i0; i <= i1; ++i) {
    const double r = out.z[i] - command.samples[i];
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    mean += r;
  }
  out.amplitude = 0.5 * (hi - lo);
  out.residual_offset = mean / static_cast<double>(i1 - i0 + 1);
  return out;
}

namespace {

double amplitude_for(const VoltageStepProgram& program,
                     std::span<const FilterSpec> filters, double omega_z,
                     double total_span) {
  const StepSignal s = synthesize_waveform(program, total_span);
  if (s.step_times.empty()) return 0.0;
  // Align the sample grid with t_p so step phases are exact.
  double dt = 1e-8;
  const double steps_per_tp = std::round(program.interval / dt);
  dt = program.interval / steps_per_tp;
  const PositionCommand c = apply_filter_chain(s, filters, dt);
  return com_trajectory(c, omega_z).amplitude;
}

}  // namespace

std::vector<double> scan_step_timing(const VoltageStepProgram& program,
                                     std::span<const FilterSpec> filters,
                                     double omega_z,
                                     std::span<const double> tp_grid,
                                     double total_span) {
  std::vector<double> out;
  out.reserve(tp_grid.size());
  for (double tp : tp_grid) {
    VoltageStepProgram p = program;
    p.interval = tp;
    out.push_back(amplitude_for(p, filters, omega_z, total_span));
  }
  return out;
}

std::vector<double> per_step_amplitudes(const VoltageStepProgram& program,
                                        std::span<const FilterSpec> filters,
                                        double omega_z, double total_span) {
  const StepSignal full = synthesize_waveform(program, total_span);
  std::vector<double> out;
  for (int k = 1; k <= program.step_count(); ++k) {
    VoltageStepProgram truncated = program;
    truncated.step_values.assign(program.step_values.begin(),
                                 program.step_values.begin() + k + 1);
    const double span_k = full.levels[k];
    if (span_k == 0.0) {
      out.push_back(0.0);
      continue;
    }
    out.push_back(amplitude_for(truncated, filters, omega_z, span_k));
  }
  return out;
}

namespace {

// Unit-step residual |1 - y(t)| of the chain, used for settling times.
std::vector<double> unit_step_residual(std::span<const FilterSpec> filters,
                                       double dt, double t_end) {
  std::vector<Stage> stages;
  for (const auto& f : filters) append_stages(stages, f, dt);
  const auto n = static_cast<std::size_t>(std::ceil(t_end / dt));
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = 1.0;
    for (auto& s : stages) x = s.advance(x);
    resid[i] = std::abs(1.0 - x);
  }
  return resid;
}

double settle_time(std::span<const double> resid, double dt, double eps) {
  std::size_t last = 0;
  for (std::size_t i = 0; i < resid.size(); ++i) {
    if (resid[i] >= eps) last = i;
  }
  return static_cast<double>(last + 1) * dt;
}

}  // namespace

ExtraFilterReport evaluate_extra_filter(const VoltageStepProgram& program,
                                        std::span<const FilterSpec> filters,
                                        const FilterSpec& extra,
                                        double omega_z, double total_span) {
  program.validate();
  extra.validate();
  std::vector<FilterSpec> with(filters.begin(), filters.end());
  with.push_back(extra);

  // Single first step.
  VoltageStepProgram single = program;
  single.step_values.assign(program.step_values.begin(),
                            program.step_values.begin() + 2);
  const StepSignal full = synthesize_waveform(program, total_span);
  const double span1 = full.levels[1];
  const double a1_base = amplitude_for(single, filters, omega_z, span1);
  const double a1_with = amplitude_for(single, with, omega_z, span1);

  // Worst case: t_p at the integer multiple of the trap period nearest the
  // programmed interval, where the step kicks add coherently.
  VoltageStepProgram worst = program;
  worst.interval = std::round(program.interval * omega_z / kTwoPi) * kTwoPi / omega_z;
  const double a9_base = amplitude_for(worst, filters, omega_z, total_span);
  const double a9_with = amplitude_for(worst, with, omega_z, total_span);

  // Settling compared at the residual the baseline chain reaches in 60 us.
  const double dt = 1e-8;
  const auto resid_base = unit_step_residual(filters, dt, 200e-6);
  const auto resid_with = unit_step_residual(with, dt, 400e-6);
  const double eps = resid_base[static_cast<std::size_t>(60e-6 / dt)];
  const double t_base = settle_time(resid_base, dt, eps);
  const double t_with = settle_time(resid_with, dt, eps);

  ExtraFilterReport out;
  out.reduction_single = a1_base / a1_with;
  out.reduction_nine = a9_base / a9_with;
  out.settling_factor = t_with / t_base;
  return out;
}

LineFit voltage_position_fit(std::span<const double> positions,
                             std::span<const double> voltages) {
  const std::size_t n = positions.size();
  if (n < 2 || voltages.size() != n) {
    throw Error(ErrorCode::InvalidInput, "need >= 2 matched points");
  }
  double vb = 0, xb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    vb += voltages[i];
    xb += positions[i];
  }
  vb /= n;
  xb /= n;
  double svv = 0, svx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    svv += (voltages[i] - vb) * (voltages[i] - vb);
    svx += (voltages[i] - vb) * (positions[i] - xb);
  }
  if (svv <= 0) {
    throw Error(ErrorCode::DegenerateFit, "voltages are rank deficient");
  }
  LineFit fit;
  fit.gradient = svx / svv;
  fit.intercept = xb - fit.gradient * vb;
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = positions[i] - (fit.intercept + fit.gradient * voltages[i]);
    ss += r * r;
  }
  fit.gradient_stderr = n > 2 ? std::sqrt(ss / (n - 2) / svv) : 0.0;
  return fit;
}

void DarkStateScan::validate() const {
  if (p0 <= 0 || p0 > 1) {
    throw Error(ErrorCode::InvalidInput, "fitted P0 must be in (0, 1]");
  }
  if (tau <= 0) throw Error(ErrorCode::InvalidInput, "fitted tau must be positive");
}

namespace {

double invert_gaussian(const DarkStateScan& s, double p) {
  const double ratio = p / s.p0;
  if (ratio <= 0.0 || ratio > 1.0) {
    throw Error(ErrorCode::DomainError,
                "probability outside the invertible Gaussian range");
  }
  return s.f0 + std::sqrt(-2.0 * s.tau * s.tau * std::log(ratio));
}

}  // namespace

double amplitude_from_darkstate_scan(const DarkStateScan& scan,
                                     double conversion) {
  scan.validate();
  const double hi = invert_gaussian(scan, scan.offset + scan.amplitude);
  const double lo = invert_gaussian(scan, scan.offset - scan.amplitude);
  const double a_f = 0.5 * std::abs(hi - lo);
  return conversion * a_f;
}

void fit_darkstate_gaussian(std::span<const double> freqs,
                            std::span<const double> p_dark,
                            DarkStateScan& scan) {
  const std::size_t n = freqs.size();
  if (n < 3 || p_dark.size() != n) {
    throw Error(ErrorCode::InvalidInput, "need >= 3 scan points");
  }
  // ln P = ln P0 - (f-f0)^2/(2 tau^2): quadratic LS in f, solved on a
  // centred and scaled axis to keep the normal equations well conditioned.
  double mean = 0, spread = 0;
  for (double f : freqs) mean += f;
  mean /= n;
  for (double f : freqs) spread = std::max(spread, std::abs(f - mean));
  if (spread <= 0) throw Error(ErrorCode::DegenerateFit, "flat frequency axis");
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (p_dark[i] <= 0) {
      throw Error(ErrorCode::DomainError, "dark-state probability must be > 0");
    }
    const double x = (freqs[i] - mean) / spread;
    a(i, 0) = 1.0;
    a(i, 1) = x;
    a(i, 2) = x * x;
    y(i) = std::log(p_dark[i]);
  }
  Eigen::Vector3d c = (a.transpose() * a).ldlt().solve(a.transpose() * y);
  if (c[2] >= 0) {
    throw Error(ErrorCode::DegenerateFit, "scan is not peak-shaped");
  }
  scan.tau = spread * std::sqrt(-0.5 / c[2]);
  scan.f0 = mean - spread * c[1] / (2.0 * c[2]);
  scan.p0 = std::exp(c[0] - c[1] * c[1] / (4.0 * c[2]));
}

void fit_darkstate_sinusoid(std::span<const double> times,
                            std::span<const double> p_dark, double omega,
                            DarkStateScan& scan) {
  const std::size_t n = times.size();
  if (n < 3 || p_dark.size() != n) {
    throw Error(ErrorCode::InvalidInput, "need >= 3 scan points");
  }
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, 0) = std::sin(omega * times[i]);
    a(i, 1) = std::cos(omega * times[i]);
    a(i, 2) = 1.0;
    y(i) = p_dark[i];
  }
  Eigen::Vector3d c = (a.transpose() * a).ldlt().solve(a.transpose() * y);
  scan.amplitude = std::hypot(c[0], c[1]);
  scan.offset = c[2];
  scan.phase = std::atan2(c[1], c[0]);
}

}  // namespace ionsim::shuttle
