#include "ionsim/photon_source.hpp"

#include <cmath>
#include <complex>

#include "ionsim/error.hpp"
#include "ionsim/rng.hpp"

namespace ionsim::photon {

void CavityGeometry::validate() const {
  if (waist <= 0 || photon_wavelength <= 0 || length <= 0) {
    throw Error(ErrorCode::InvalidInput, "cavity geometry must be positive");
  }
  if (axis_angle <= 0 || axis_angle >= kTwoPi / 4) {
    throw Error(ErrorCode::InvalidInput, "axis angle must be in (0, pi/2)");
  }
}

void RamanBeam::validate() const {
  if (waist <= 0) throw Error(ErrorCode::InvalidInput, "beam waist must be positive");
  if (rabi < 0) throw Error(ErrorCode::InvalidInput, "Rabi frequency must be >= 0");
}

void PhotonSourceModel::validate() const {
  if (g < 0 || kappa < 0 || gamma_eff < 0 || jitter_sigma < 0 ||
      escape_probability < 0 || escape_probability > 1) {
    throw Error(ErrorCode::InvalidInput, "source model rates out of range");
  }
  if (pulse_duration <= 0 || time_step <= 0) {
    throw Error(ErrorCode::InvalidInput, "pulse duration and step must be positive");
  }
  if (detuning <= 0) {
    throw Error(ErrorCode::InvalidCalibration,
                "Raman detuning not calibrated (see stark_calibrate_detuning)");
  }
}

void IonDriveContext::validate() const {
  if (reduced_rabi < 0 || osc_amplitude < 0 || ripple_amplitude < 0) {
    throw Error(ErrorCode::InvalidInput, "drive context amplitudes must be >= 0");
  }
  if (omega_z <= 0) throw Error(ErrorCode::InvalidInput, "omega_z must be positive");
}

CavityParams cavity_derived_params(double finesse, double length, double t2) {
  if (finesse <= 0 || length <= 0 || t2 < 0) {
    throw Error(ErrorCode::InvalidInput, "finesse and length must be positive");
  }
  CavityParams p;
  p.finesse = finesse;
  p.round_trip_loss = kTwoPi / finesse;
  if (t2 > p.round_trip_loss) {
    throw Error(ErrorCode::UnphysicalEscape,
                "mirror transmission exceeds the total round-trip loss");
  }
  p.kappa = kSpeedOfLight * p.round_trip_loss / (4.0 * length);
  p.output_transmission = t2;
  p.escape_probability = t2 / p.round_trip_loss;
  return p;
}

double stark_calibrate_detuning(double rabi, double stark_shift) {
  if (stark_shift <= 0) {
    throw Error(ErrorCode::InvalidCalibration, "Stark shift must be positive");
  }
  if (rabi <= 0) {
    throw Error(ErrorCode::InvalidCalibration, "Rabi frequency must be positive");
  }
  return rabi * rabi / (4.0 * stark_shift);
}

SpatialCoupling spatial_coupling(double z, const RamanBeam& beam,
                                 const CavityGeometry& geometry, double g) {
  beam.validate();
  geometry.validate();
  const double beam_factor = std::exp(-z * z / (beam.waist * beam.waist));
  const double k = kTwoPi / geometry.photon_wavelength;
  const double standing = std::cos(k * z * std::sin(geometry.axis_angle));
  const double envelope = std::exp(
      -std::pow(z * std::cos(geometry.axis_angle) / geometry.waist, 2));
  return {beam.rabi * beam_factor, g * standing * envelope};
}

namespace {

using complexd = std::complex<double>;

// Effective Lambda system in the single-excitation basis
// {|S,0>, |D,1_H>, |D',1_V>} plus absorbing sinks for the two emitted-photon
// channels and scattering loss. The excited manifold is adiabatically
// eliminated: pair coupling g(z) Omega_r(z) / (2 Delta) split evenly over
// the two polarisation branches, scattering loss Gamma_eff Omega(z)^2 /
// (4 Delta^2) from |S,0>.
struct LambdaRun {
  double p_exit = 0.0;       // photon past the output mirror
  double trace_error = 0.0;  // |1 - tr(rho) - sinks|
};

LambdaRun integrate_lambda(const PhotonSourceModel& model,
                           const IonDriveContext& ctx,
                           const CavityGeometry& geometry,
                           const RamanBeam& beam, double cavity_detuning,
                           double dt, std::vector<double>* density_bins,
                           double bin_width) {
  const double stark0 = beam.rabi * beam.rabi / (4.0 * model.detuning);
  const double g_pair0 = model.g * ctx.reduced_rabi /
                         (2.0 * model.detuning) / std::sqrt(2.0);
  const double gamma0 = model.gamma_eff * beam.rabi * beam.rabi /
                        (4.0 * model.detuning * model.detuning);
  const double two_kappa = 2.0 * model.kappa;

  const auto steps = static_cast<long>(std::llround(model.pulse_duration / dt));
  complexd rho[3][3] = {};
  rho[0][0] = 1.0;
  double sink_photon = 0.0, sink_loss = 0.0;

  // Spatial factors vary on the trap period; the Hamiltonian is refreshed
  // from z(t) at every RK4 stage time.
  auto coeffs = [&](double t, double& delta2, double& g_pair, double& gamma_s) {
    const double z = ctx.osc_amplitude * std::sin(ctx.omega_z * t) +
                     ctx.displacement;
    const double bf = std::exp(-z * z / (beam.waist * beam.waist));
    const double k = kTwoPi / geometry.photon_wavelength;
    const double cf = std::cos(k * z * std::sin(geometry.axis_angle)) *
                      std::exp(-std::pow(z * std::cos(geometry.axis_angle) /
                                             geometry.waist, 2));
    delta2 = stark0 * (1.0 - bf * bf);  // resonance calibrated at z = 0
    g_pair = g_pair0 * bf * cf;
    gamma_s = gamma0 * bf * bf;
  };

  // d rho = -i[H, rho] - 1/2 {D, rho}; D = diag(gamma_s, 2k, 2k),
  // H = [[delta2, g, g], [g, delta_c, 0], [g, 0, delta_c]].
  auto deriv = [&](const complexd (&r)[3][3], double t, complexd (&dr)[3][3],
                   double& demit, double& dloss) {
    double delta2, g_pair, gamma_s;
    coeffs(t, delta2, g_pair, gamma_s);
    const double g = g_pair;
    complexd h_rho[3][3], rho_h[3][3];
    for (int j = 0; j < 3; ++j) {
      h_rho[0][j] = delta2 * r[0][j] + g * r[1][j] + g * r[2][j];
      h_rho[1][j] = g * r[0][j] + cavity_detuning * r[1][j];
      h_rho[2][j] = g * r[0][j] + cavity_detuning * r[2][j];
    }
    for (int i = 0; i < 3; ++i) {
      rho_h[i][0] = r[i][0] * delta2 + r[i][1] * g + r[i][2] * g;
      rho_h[i][1] = r[i][0] * g + r[i][1] * cavity_detuning;
      rho_h[i][2] = r[i][0] * g + r[i][2] * cavity_detuning;
    }
    const double d[3] = {gamma_s, two_kappa, two_kappa};
    const complexd im(0.0, 1.0);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        dr[i][j] = -im * (h_rho[i][j] - rho_h[i][j]) -
                   0.5 * (d[i] + d[j]) * r[i][j];
      }
    }
    demit = two_kappa * (r[1][1].real() + r[2][2].real());
    dloss = gamma_s * r[0][0].real();
  };

  complexd k1[3][3], k2[3][3], k3[3][3], k4[3][3], tmp[3][3];
  double e1, e2, e3, e4, l1, l2, l3, l4;
  double t = 0.0;
  for (long s = 0; s < steps; ++s) {
    deriv(rho, t, k1, e1, l1);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) tmp[i][j] = rho[i][j] + 0.5 * dt * k1[i][j];
    deriv(tmp, t + 0.5 * dt, k2, e2, l2);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) tmp[i][j] = rho[i][j] + 0.5 * dt * k2[i][j];
    deriv(tmp, t + 0.5 * dt, k3, e3, l3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) tmp[i][j] = rho[i][j] + dt * k3[i][j];
    deriv(tmp, t + dt, k4, e4, l4);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        rho[i][j] += dt / 6.0 *
                     (k1[i][j] + 2.0 * k2[i][j] + 2.0 * k3[i][j] + k4[i][j]);
      }
    }
    const double emitted = dt / 6.0 * (e1 + 2 * e2 + 2 * e3 + e4);
    sink_photon += emitted;
    sink_loss += dt / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4);
    if (density_bins) {
      const auto bin = static_cast<std::size_t>((t + 0.5 * dt) / bin_width);
      if (bin < density_bins->size()) {
        (*density_bins)[bin] += model.escape_probability * emitted;
      }
    }
    t += dt;
  }

  LambdaRun out;
  out.p_exit = model.escape_probability * sink_photon;
  const double trace = rho[0][0].real() + rho[1][1].real() + rho[2][2].real();
  out.trace_error = std::abs(1.0 - trace - sink_photon - sink_loss);
  return out;
}

}  // namespace

Wavepacket simulate_photon_generation(const PhotonSourceModel& model,
                                      const IonDriveContext& context,
                                      const CavityGeometry& geometry,
                                      const RamanBeam& beam,
                                      std::uint64_t seed) {
  model.validate();
  context.validate();
  geometry.validate();
  beam.validate();

  Wavepacket wp;
  wp.bin_width = 0.2e-6;
  const auto bins = static_cast<std::size_t>(
      std::ceil(model.pulse_duration / wp.bin_width));
  wp.density.assign(bins, 0.0);

  const int shots = model.jitter_sigma > 0 ? std::max(1, model.jitter_shots) : 1;
  std::vector<double> mass(bins, 0.0);
  double max_trace_err = 0.0;
  for (int shot = 0; shot < shots; ++shot) {
    double delta_c = 0.0;
    if (model.jitter_sigma > 0) {
      Rng rng = Rng::stream(seed, {0xca41, static_cast<std::uint64_t>(shot)});
      delta_c = model.jitter_sigma * rng.normal();
    }
    std::vector<double> shot_mass(bins, 0.0);
    const LambdaRun run = integrate_lambda(model, context, geometry, beam,
                                           delta_c, model.time_step,
                                           &shot_mass, wp.bin_width);
    max_trace_err = std::max(max_trace_err, run.trace_error);
    // Step-halving stability check on the first shot.
    if (shot == 0) {
      const LambdaRun coarse = integrate_lambda(model, context, geometry, beam,
                                                delta_c, 2.0 * model.time_step,
                                                nullptr, wp.bin_width);
      const double scale = std::max(run.p_exit, 1e-12);
      const double rel = std::abs(coarse.p_exit - run.p_exit) / scale;
      if (!std::isfinite(run.p_exit) || !(rel <= 0.005)) {
        throw Error(ErrorCode::ConvergenceFailure,
                    "master-equation step size is not converged");
      }
    }
    for (std::size_t b = 0; b < bins; ++b) mass[b] += shot_mass[b] / shots;
  }
  if (max_trace_err > 1e-8) {
    throw Error(ErrorCode::ConvergenceFailure,
                "master-equation trace drift exceeds tolerance");
  }

  // Binning is exhaustive over the pulse, so the density integrates to P_c.
  double p_total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    wp.density[b] = mass[b] / wp.bin_width;
    p_total += mass[b];
  }
  wp.total_probability = p_total;
  return wp;
}

std::vector<double> efficiency_vs_displacement(const PhotonSourceModel& model,
                                               const IonDriveContext& context,
                                               const CavityGeometry& geometry,
                                               const RamanBeam& beam,
                                               std::span<const double> z_grid,
                                               std::uint64_t seed) {
  // Jitter shifts numerator and denominator alike; evaluate the ratio
  // jitter-free.
  PhotonSourceModel quiet = model;
  quiet.jitter_sigma = 0.0;
  IonDriveContext base = context;
  base.displacement = 0.0;
  base.osc_amplitude = 0.0;
  const double p0 =
      simulate_photon_generation(quiet, base, geometry, beam, seed)
          .total_probability;
  if (p0 <= 0) {
    throw Error(ErrorCode::DegenerateFit, "zero baseline efficiency");
  }
  std::vector<double> out;
  out.reserve(z_grid.size());
  for (double z : z_grid) {
    IonDriveContext ctx = base;
    ctx.displacement = z;
    out.push_back(
        simulate_photon_generation(quiet, ctx, geometry, beam, seed)
            .total_probability / p0);
  }
  return out;
}

double symmetric_displacement_efficiency(const PhotonSourceModel& model,
                                         const IonDriveContext& context,
                                         const CavityGeometry& geometry,
                                         const RamanBeam& beam, double z,
                                         std::uint64_t seed) {
  const double grid[2] = {z, -z};
  const auto frac = efficiency_vs_displacement(model, context, geometry, beam,
                                               std::span<const double>(grid, 2),
                                               seed);
  return 0.5 * (frac[0] + frac[1]);
}

double efficiency_with_oscillation(const PhotonSourceModel& model,
                                   const IonDriveContext& context,
                                   const CavityGeometry& geometry,
                                   const RamanBeam& beam, double osc_amplitude,
                                   double displacement, std::uint64_t seed) {
  PhotonSourceModel quiet = model;
  quiet.jitter_sigma = 0.0;
  IonDriveContext base = context;
  base.displacement = 0.0;
  base.osc_amplitude = 0.0;
  const double p0 =
      simulate_photon_generation(quiet, base, geometry, beam, seed)
          .total_probability;
  IonDriveContext driven = base;
  driven.osc_amplitude = osc_amplitude;
  driven.displacement = displacement;
  const double p =
      simulate_photon_generation(quiet, driven, geometry, beam, seed)
          .total_probability;
  return p / p0;
}

double efficiency_with_ripple(const PhotonSourceModel& model,
                              const IonDriveContext& context,
                              const CavityGeometry& geometry,
                              const RamanBeam& beam, double ripple_amplitude,
                              std::uint64_t seed, int phase_points) {
  if (phase_points < 1) {
    throw Error(ErrorCode::InvalidInput, "need at least one phase point");
  }
  // The 50 Hz period dwarfs the pulse, so each attempt sees a frozen
  // displacement; average the static efficiency over one cycle.
  PhotonSourceModel quiet = model;
  quiet.jitter_sigma = 0.0;
  double sum = 0.0;
  for (int k = 0; k < phase_points; ++k) {
    const double u = kTwoPi * (k + 0.5) / phase_points;
    const double z = context.displacement + ripple_amplitude * std::sin(u);
    IonDriveContext ctx = context;
    ctx.displacement = z;
    ctx.osc_amplitude = 0.0;
    sum += simulate_photon_generation(quiet, ctx, geometry, beam, seed)
               .total_probability;
  }
  IonDriveContext base = context;
  base.displacement = context.displacement;
  base.osc_amplitude = 0.0;
  const double p0 =
      simulate_photon_generation(quiet, base, geometry, beam, seed)
          .total_probability;
  return sum / phase_points / p0;
}

XiFit fit_detection_efficiency(std::span<const double> p_detected,
                               std::span<const double> p_cavity) {
  if (p_detected.empty() || p_detected.size() != p_cavity.size()) {
    throw Error(ErrorCode::InvalidInput, "need matched non-empty lists");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < p_detected.size(); ++i) {
    num += p_detected[i] * p_cavity[i];
    den += p_cavity[i] * p_cavity[i];
  }
  if (den <= 0.0) {
    throw Error(ErrorCode::DegenerateFit, "all cavity probabilities are zero");
  }
  XiFit fit;
  fit.xi = num / den;
  if (fit.xi < 0.0) {
    fit.xi = 0.0;
    fit.clamped = true;
  } else if (fit.xi > 1.0) {
    fit.xi = 1.0;
    fit.clamped = true;
  }
  return fit;
}

DetectionBudget detection_budget(
    const std::vector<std::vector<double>>& stage_efficiencies) {
  DetectionBudget out;
  for (const auto& path : stage_efficiencies) {
    double product = 1.0;
    for (double e : path) {
      if (e < 0.0 || e > 1.0) {
        throw Error(ErrorCode::InvalidInput, "stage efficiency outside [0, 1]");
      }
      product *= e;
    }
    out.path_totals.push_back(product);
  }
  if (out.path_totals.empty()) {
    throw Error(ErrorCode::InvalidInput, "no detection paths");
  }
  for (double p : out.path_totals) out.xi_max += p;
  out.xi_max /= static_cast<double>(out.path_totals.size());
  return out;
}

}  // namespace ionsim::photon
