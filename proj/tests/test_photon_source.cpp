#include <cmath>

#include "doctest.h"
#include "ionsim/photon_source.hpp"

using namespace ionsim;
using namespace ionsim::photon;

namespace {

// Calibrated source model: low-finesse cavity row with T2 fixed from the
// high-finesse one, detuning from the measured light shift.
PhotonSourceModel calibrated_model() {
  const double t2 = 0.78 * kTwoPi / 54e3;
  const CavityParams cav = cavity_derived_params(30e3, 19.906e-3, t2);
  PhotonSourceModel m;
  m.kappa = cav.kappa;
  m.escape_probability = cav.escape_probability;
  m.detuning = stark_calibrate_detuning(kTwoPi * 53.2e6, kTwoPi * 1.26e6);
  return m;
}

const CavityGeometry kGeometry;
const RamanBeam kBeam;

IonDriveContext context_with_ratio(double ratio) {
  IonDriveContext ctx;
  ctx.reduced_rabi = ratio * kBeam.rabi;
  return ctx;
}

}  // namespace

TEST_CASE("cavity parameter derivations") {
  const double t2 = 0.78 * kTwoPi / 54e3;

  SUBCASE("high-finesse row") {
    const CavityParams p = cavity_derived_params(54e3, 19.906e-3, t2);
    CHECK(p.round_trip_loss == doctest::Approx(kTwoPi / 54e3));
    CHECK(p.kappa / kTwoPi == doctest::Approx(69.72e3).epsilon(1e-3));
    CHECK(p.kappa / kTwoPi > 68e3);
    CHECK(p.kappa / kTwoPi < 72e3);
    CHECK(p.escape_probability == doctest::Approx(0.78));
  }
  SUBCASE("low-finesse row with the same mirror") {
    const CavityParams p = cavity_derived_params(30e3, 19.906e-3, t2);
    CHECK(p.kappa / kTwoPi == doctest::Approx(125.50e3).epsilon(1e-3));
    CHECK(p.kappa / kTwoPi > 124e3);
    CHECK(p.kappa / kTwoPi < 128e3);
    CHECK(p.escape_probability == doctest::Approx(0.43333).epsilon(1e-4));
  }
  SUBCASE("the two published rows imply the same transmission within 5%") {
    const double t2_high = 0.78 * kTwoPi / 54e3;
    const double t2_low = 0.43 * kTwoPi / 30e3;
    CHECK(std::abs(t2_high - t2_low) / t2_high < 0.05);
  }
  SUBCASE("transmission above the round-trip loss is unphysical") {
    CHECK_THROWS_AS((void)cavity_derived_params(54e3, 19.906e-3, 1e-3), Error);
  }
}

TEST_CASE("detuning calibration from the light shift") {
  const double omega = kTwoPi * 53.2e6;
  const double delta = stark_calibrate_detuning(omega, kTwoPi * 1.26e6);
  CHECK(delta / (kTwoPi * 1e6) == doctest::Approx(561.556).epsilon(1e-4));
  // Quadratic scaling: doubling the Rabi frequency at fixed detuning
  // quadruples the shift.
  CHECK(stark_calibrate_detuning(2.0 * omega, 4.0 * kTwoPi * 1.26e6) ==
        doctest::Approx(delta).epsilon(1e-12));
  CHECK_THROWS_AS((void)stark_calibrate_detuning(omega, 0.0), Error);
  CHECK_THROWS_AS((void)stark_calibrate_detuning(omega, -1.0), Error);
}

TEST_CASE("spatial coupling profiles") {
  const double g = kTwoPi * 1.53e6;

  SUBCASE("profile maxima at the waist") {
    const auto c = spatial_coupling(0.0, kBeam, kGeometry, g);
    CHECK(c.rabi == doctest::Approx(kBeam.rabi));
    CHECK(c.g == doctest::Approx(g));
  }
  SUBCASE("Gaussian beam factor at 0.2 um") {
    const auto c = spatial_coupling(0.2e-6, kBeam, kGeometry, g);
    CHECK(c.rabi / kBeam.rabi == doctest::Approx(0.976609).epsilon(1e-6));
  }
  SUBCASE("first standing-wave node") {
    const double z = kGeometry.photon_wavelength /
                     (4.0 * std::sin(kGeometry.axis_angle));
    CHECK(z * 1e6 == doctest::Approx(2.9861).epsilon(1e-4));
    const auto c = spatial_coupling(z, kBeam, kGeometry, g);
    CHECK(std::abs(c.g) / g < 1e-9);
  }
}

TEST_CASE("photon generation master equation") {
  const PhotonSourceModel model = calibrated_model();

  SUBCASE("no carrier coupling, no photon") {
    const Wavepacket wp = simulate_photon_generation(
        model, context_with_ratio(0.0), kGeometry, kBeam, 1);
    CHECK(wp.total_probability == doctest::Approx(0.0));
    for (double d : wp.density) CHECK(d == 0.0);
  }
  SUBCASE("escape probability bounds every run") {
    for (double ratio : {0.3, 0.7, 1.0}) {
      IonDriveContext ctx = context_with_ratio(ratio);
      ctx.displacement = 0.1e-6;
      ctx.osc_amplitude = 0.15e-6;
      const Wavepacket wp =
          simulate_photon_generation(model, ctx, kGeometry, kBeam, 2);
      CHECK(wp.total_probability > 0.0);
      CHECK(wp.total_probability <= model.escape_probability);
    }
  }
  SUBCASE("density integrates to the total probability") {
    const Wavepacket wp = simulate_photon_generation(
        model, context_with_ratio(1.0), kGeometry, kBeam, 3);
    double area = 0;
    for (double d : wp.density) area += d * wp.bin_width;
    CHECK(area == doctest::Approx(wp.total_probability).epsilon(1e-9));
    CHECK(wp.total_probability == doctest::Approx(0.2220).epsilon(2e-3));
  }
  SUBCASE("jitter-free runs are seed independent") {
    PhotonSourceModel quiet = model;
    quiet.jitter_sigma = 0.0;
    const Wavepacket a = simulate_photon_generation(
        quiet, context_with_ratio(1.0), kGeometry, kBeam, 1);
    const Wavepacket b = simulate_photon_generation(
        quiet, context_with_ratio(1.0), kGeometry, kBeam, 999);
    CHECK(a.total_probability == b.total_probability);
    CHECK(a.density == b.density);
  }
  SUBCASE("jittered runs are reproducible per seed") {
    PhotonSourceModel jittery = model;
    jittery.jitter_shots = 4;
    const Wavepacket a = simulate_photon_generation(
        jittery, context_with_ratio(1.0), kGeometry, kBeam, 10);
    const Wavepacket b = simulate_photon_generation(
        jittery, context_with_ratio(1.0), kGeometry, kBeam, 10);
    const Wavepacket c = simulate_photon_generation(
        jittery, context_with_ratio(1.0), kGeometry, kBeam, 11);
    CHECK(a.total_probability == b.total_probability);
    CHECK(a.total_probability != c.total_probability);
  }
  SUBCASE("a hopelessly coarse step trips the convergence check") {
    PhotonSourceModel coarse = model;
    coarse.time_step = 4e-6;
    CHECK_THROWS_AS((void)simulate_photon_generation(
                        coarse, context_with_ratio(1.0), kGeometry, kBeam, 1),
                    Error);
  }
}

TEST_CASE("displacement efficiency curves") {
  const PhotonSourceModel model = calibrated_model();
  const IonDriveContext ion1 = context_with_ratio(0.8336);

  SUBCASE("zero displacement is the reference point") {
    const double grid[1] = {0.0};
    const auto frac =
        efficiency_vs_displacement(model, ion1, kGeometry, kBeam, grid, 1);
    CHECK(frac[0] == doctest::Approx(1.0));
  }
  SUBCASE("small displacements cost less than 1.5%") {
    const double eff = symmetric_displacement_efficiency(model, ion1, kGeometry,
                                                         kBeam, 0.1e-6, 1);
    CHECK(1.0 - eff < 0.015);
    CHECK(eff < 1.0);
  }
  SUBCASE("effective-model value at 0.2 um") {
    // The effective Lambda model puts the +-0.2 um drop at 0.93-0.95
    // depending on the carrier suppression (reported alongside the
    // 0.89-0.90 figure of the full multi-level treatment).
    const double eff = symmetric_displacement_efficiency(model, ion1, kGeometry,
                                                         kBeam, 0.2e-6, 1);
    CHECK(eff == doctest::Approx(0.9358).epsilon(3e-3));
  }
  SUBCASE("efficiency decreases monotonically out to 1 um") {
    const double grid[5] = {0.0, 0.25e-6, 0.5e-6, 0.75e-6, 1.0e-6};
    const auto frac =
        efficiency_vs_displacement(model, ion1, kGeometry, kBeam, grid, 1);
    for (int k = 1; k < 5; ++k) CHECK(frac[k] < frac[k - 1]);
  }
}

TEST_CASE("oscillation and ripple efficiencies") {
  const PhotonSourceModel model = calibrated_model();
  const IonDriveContext ion10 = context_with_ratio(0.8336);

  SUBCASE("no drive, no drop") {
    CHECK(efficiency_with_oscillation(model, ion10, kGeometry, kBeam, 0.0, 0.0,
                                      1) == doctest::Approx(1.0));
  }
  SUBCASE("worst-case oscillation alone") {
    const double eff = efficiency_with_oscillation(model, ion10, kGeometry,
                                                   kBeam, 0.2e-6, 0.0, 1);
    CHECK(eff == doctest::Approx(0.9826).epsilon(2e-3));
    CHECK(eff > 0.97);
    CHECK(eff < 0.99);
  }
  SUBCASE("oscillation on top of a displacement") {
    const double eff = efficiency_with_oscillation(model, ion10, kGeometry,
                                                   kBeam, 0.2e-6, 0.2e-6, 1);
    CHECK(eff == doctest::Approx(0.8504).epsilon(3e-3));
    CHECK(eff > 0.82);
    CHECK(eff < 0.88);
  }
  SUBCASE("quasi-static ripple sits above the static worst case") {
    const double with_ripple = efficiency_with_ripple(model, ion10, kGeometry,
                                                      kBeam, 0.1e-6, 1, 8);
    const double static_worst = symmetric_displacement_efficiency(
        model, ion10, kGeometry, kBeam, 0.1e-6, 1);
    CHECK(with_ripple >= static_worst);
    CHECK(with_ripple < 1.0);
  }
}

TEST_CASE("detection efficiency fit") {
  SUBCASE("proportional data recovers the scale exactly") {
    const double pc[3] = {0.20, 0.18, 0.16};
    const double pd[3] = {0.10, 0.09, 0.08};
    const XiFit fit = fit_detection_efficiency(pd, pc);
    CHECK(fit.xi == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_FALSE(fit.clamped);
  }
  SUBCASE("single pair is the plain ratio") {
    const double pc[1] = {0.25};
    const double pd[1] = {0.09};
    CHECK(fit_detection_efficiency(pd, pc).xi == doctest::Approx(0.36));
  }
  SUBCASE("fits above one are clamped and flagged") {
    const double pc[2] = {0.1, 0.2};
    const double pd[2] = {0.2, 0.4};
    const XiFit fit = fit_detection_efficiency(pd, pc);
    CHECK(fit.xi == 1.0);
    CHECK(fit.clamped);
  }
  SUBCASE("all-zero model probabilities are degenerate") {
    const double pc[2] = {0.0, 0.0};
    const double pd[2] = {0.1, 0.1};
    CHECK_THROWS_AS((void)fit_detection_efficiency(pd, pc), Error);
  }
}

TEST_CASE("detection-path budget") {
  const DetectionBudget b = detection_budget(
      {{0.96, 0.84, 0.73, 0.80}, {0.96, 0.84, 0.68, 0.88}});
  CHECK(b.path_totals[0] == doctest::Approx(0.470938).epsilon(1e-5));
  CHECK(b.path_totals[1] == doctest::Approx(0.482550).epsilon(1e-5));
  CHECK(b.xi_max == doctest::Approx(0.476744).epsilon(1e-5));

  CHECK(detection_budget({{1.0, 1.0, 1.0}}).xi_max == doctest::Approx(1.0));
  CHECK(detection_budget({{0.9, 0.0, 0.8}}).xi_max == doctest::Approx(0.0));
  CHECK_THROWS_AS((void)detection_budget({{0.9, 1.2}}), Error);
}
