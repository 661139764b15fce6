#include <cmath>
#include <sstream>

#include "doctest.h"
#include "ionsim/string_mechanics.hpp"

using namespace ionsim;
using namespace ionsim::mechanics;

namespace {

const PhysicalConstants kConst;

TrapConfiguration ten_ion_trap() {
  return TrapConfiguration{10, kTwoPi * 358e3, kTwoPi * 2.0940e6,
                           kTwoPi * 2.0469e6};
}

// Independent residual: dimensionless force on each ion at the solution.
double max_residual_force(const IonString& s) {
  double worst = 0;
  for (int i = 0; i < s.size(); ++i) {
    double f = -s.positions[i] / s.length_scale;
    for (int j = 0; j < s.size(); ++j) {
      if (j == i) continue;
      const double d = (s.positions[i] - s.positions[j]) / s.length_scale;
      f += (d > 0 ? 1.0 : -1.0) / (d * d);
    }
    worst = std::max(worst, std::abs(f));
  }
  return worst;
}

}  // namespace

TEST_CASE("single ion sits at the trap centre") {
  const IonString s =
      equilibrium_positions({1, kTwoPi * 1e6, kTwoPi * 3e6, kTwoPi * 3e6}, kConst);
  REQUIRE(s.size() == 1);
  CHECK(s.positions[0] == doctest::Approx(0.0));
}

TEST_CASE("two-ion separation matches the analytic Coulomb balance") {
  TrapConfiguration trap{2, kTwoPi * 0.96e6, kTwoPi * 3e6, kTwoPi * 3e6};
  const IonString s = equilibrium_positions(trap, kConst);
  const double separation = s.positions[1] - s.positions[0];
  // Force balance puts the ions at +-l / 4^(1/3).
  CHECK(separation ==
        doctest::Approx(std::cbrt(2.0) * s.length_scale).epsilon(1e-10));
  CHECK(separation == doctest::Approx(5.7601e-6).epsilon(2e-4));
  // Reported measurement: 5.74(4) um.
  CHECK(separation > 5.69e-6);
  CHECK(separation < 5.80e-6);
}

TEST_CASE("ten-ion string geometry") {
  const IonString s = equilibrium_positions(ten_ion_trap(), kConst);
  CHECK(s.length_scale == doctest::Approx(8.824252e-6).epsilon(1e-5));
  CHECK(s.span() == doctest::Approx(50.6658e-6).epsilon(1e-4));
  double com = 0;
  for (double x : s.positions) com += x;
  CHECK(std::abs(com / 10.0) < 1e-12 * s.length_scale);
  CHECK(max_residual_force(s) < 1e-9);
  for (int i = 1; i < 10; ++i) CHECK(s.positions[i] > s.positions[i - 1]);
}

TEST_CASE("axial frequency scaling law") {
  for (int n : {2, 5, 10}) {
    TrapConfiguration a{n, kTwoPi * 358e3, kTwoPi * 3e6, kTwoPi * 3e6};
    TrapConfiguration b = a;
    b.omega_z *= 2.0;
    b.omega_rx *= 2.0;
    b.omega_ry *= 2.0;
    const IonString sa = equilibrium_positions(a, kConst);
    const IonString sb = equilibrium_positions(b, kConst);
    // positions scale as omega^(-2/3)
    const double expected = std::pow(2.0, -2.0 / 3.0);
    CHECK(sb.span() / sa.span() == doctest::Approx(expected).epsilon(1e-10));
    const ModeSet ma = normal_modes(sa, a, Branch::Axial);
    const ModeSet mb = normal_modes(sb, b, Branch::Axial);
    for (int m = 0; m < n; ++m) {
      CHECK(mb.frequencies[m] / ma.frequencies[m] ==
            doctest::Approx(2.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("two-ion axial modes are the COM and stretch modes") {
  TrapConfiguration trap{2, kTwoPi * 0.96e6, kTwoPi * 3e6, kTwoPi * 3e6};
  const IonString s = equilibrium_positions(trap, kConst);
  const ModeSet m = normal_modes(s, trap, Branch::Axial);
  CHECK(m.frequencies[0] == doctest::Approx(trap.omega_z).epsilon(1e-12));
  CHECK(m.frequencies[1] ==
        doctest::Approx(std::sqrt(3.0) * trap.omega_z).epsilon(1e-12));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(std::abs(m.eigenvectors(0, 0)) == doctest::Approx(inv_sqrt2));
  CHECK(std::abs(m.eigenvectors(1, 0)) == doctest::Approx(inv_sqrt2));
  CHECK(m.eigenvectors(0, 0) * m.eigenvectors(1, 0) > 0);   // COM in phase
  CHECK(m.eigenvectors(0, 1) * m.eigenvectors(1, 1) < 0);   // stretch
}

TEST_CASE("mode eigenvectors are orthonormal and the COM mode is uniform") {
  const TrapConfiguration trap = ten_ion_trap();
  const IonString s = equilibrium_positions(trap, kConst);
  for (Branch b : {Branch::Axial, Branch::RadialX, Branch::RadialY}) {
    const ModeSet m = normal_modes(s, trap, b);
    const Eigen::MatrixXd gram =
        m.eigenvectors.transpose() * m.eigenvectors -
        Eigen::MatrixXd::Identity(10, 10);
    CHECK(gram.cwiseAbs().maxCoeff() < 1e-10);
    const int com = b == Branch::Axial ? 0 : 9;
    for (int i = 0; i < 10; ++i) {
      CHECK(std::abs(m.eigenvectors(i, com)) ==
            doctest::Approx(1.0 / std::sqrt(10.0)).epsilon(1e-9));
    }
  }
}

TEST_CASE("radial COM frequencies and the zigzag margin") {
  const TrapConfiguration trap = ten_ion_trap();
  const IonString s = equilibrium_positions(trap, kConst);
  const ModeSet mx = normal_modes(s, trap, Branch::RadialX);
  CHECK(mx.frequencies.back() == doctest::Approx(trap.omega_rx).epsilon(1e-12));
  // The harmonic model puts the lowest radial mode at 1.2954 MHz for this
  // confinement; the 1.1273 MHz measurement is reported alongside rather
  // than asserted.
  CHECK(mx.frequencies.front() / kTwoPi == doctest::Approx(1.29537e6).epsilon(2e-4));
  const ModeSet my = normal_modes(s, trap, Branch::RadialY);
  CHECK(my.frequencies.back() == doctest::Approx(trap.omega_ry).epsilon(1e-12));
}

TEST_CASE("weak radial confinement trips the zigzag check") {
  TrapConfiguration trap = ten_ion_trap();
  trap.omega_rx = 4.0 * trap.omega_z;
  const IonString s = equilibrium_positions(trap, kConst);
  CHECK_THROWS_AS((void)normal_modes(s, trap, Branch::RadialX), Error);
}

TEST_CASE("lowest radial eigenvector pattern") {
  // Normalised to the largest entry, the zigzag mode of ten ions follows a
  // fixed profile irrespective of the trap frequencies.
  const double reference[10] = {0.0002, 0.003, 0.016, 0.044, 0.071,
                                0.071,  0.044, 0.016, 0.003, 0.0002};
  const TrapConfiguration trap = ten_ion_trap();
  const IonString s = equilibrium_positions(trap, kConst);
  const ModeSet mx = normal_modes(s, trap, Branch::RadialX);
  Eigen::VectorXd zig = mx.eigenvectors.col(0).cwiseAbs();
  zig /= zig.maxCoeff();
  for (int i = 0; i < 10; ++i) {
    if (reference[i] < 0.016) continue;
    CHECK(std::abs(zig[i] - reference[i] / 0.071) < 0.10 * reference[i] / 0.071);
  }
}

TEST_CASE("Lamb-Dicke factors") {
  const TrapConfiguration trap = ten_ion_trap();
  const IonString s = equilibrium_positions(trap, kConst);
  const ModeSet mx = normal_modes(s, trap, Branch::RadialX);

  SUBCASE("perpendicular projection removes the coupling") {
    const auto table = lamb_dicke_factors(mx, 393e-9, kTwoPi / 4.0, kConst);
    CHECK(table.eta.maxCoeff() < 1e-15);
  }
  SUBCASE("COM mode couples all ions equally") {
    const auto table = lamb_dicke_factors(mx, 393e-9, deg_to_rad(45), kConst);
    for (int i = 1; i < 10; ++i) {
      CHECK(table.eta(i, 9) == doctest::Approx(table.eta(0, 9)).epsilon(1e-12));
    }
    // Chosen scale: orthonormal eigenvectors with the single-ion mass.
    CHECK(table.eta(0, 9) == doctest::Approx(0.0277821).epsilon(1e-4));
    const auto report = com_eta_report(table, mx);
    CHECK(report.eta_com == doctest::Approx(0.0277821).epsilon(1e-4));
    CHECK(report.ratio_to_reference == doctest::Approx(9.922).epsilon(1e-3));
    CHECK(report.eta_com_total_mass_orthonormal ==
          doctest::Approx(0.0277821 / std::sqrt(10.0)).epsilon(1e-4));
    CHECK_FALSE(table.lamb_dicke_warning);
  }
  SUBCASE("soft confinement raises the warning flag") {
    TrapConfiguration soft{1, kTwoPi * 100.0, kTwoPi * 200.0, kTwoPi * 200.0};
    const IonString one = equilibrium_positions(soft, kConst);
    const ModeSet m1 = normal_modes(one, soft, Branch::Axial);
    const auto table = lamb_dicke_factors(m1, 393e-9, deg_to_rad(45), kConst);
    CHECK(table.lamb_dicke_warning);
  }
}

TEST_CASE("thermal occupations from a reference mode") {
  ModeSet modes;
  modes.branch = Branch::RadialX;
  modes.frequencies = {kTwoPi * 1.1273e6, kTwoPi * 2.0940e6};
  modes.eigenvectors = Eigen::MatrixXd::Identity(2, 2);

  const ThermalState t =
      thermal_occupations(10.0, kTwoPi * 2.0940e6, modes, kConst);
  CHECK(t.nbar[1] == doctest::Approx(10.0).epsilon(1e-12));  // self-consistency
  CHECK(t.nbar[0] == doctest::Approx(18.9936).epsilon(1e-4));
  CHECK(t.nbar[0] > 18.5);
  CHECK(t.nbar[0] < 19.5);
  CHECK(t.temperature == doctest::Approx(1.05441e-3).epsilon(1e-4));

  SUBCASE("occupations decrease with frequency") {
    const TrapConfiguration trap = ten_ion_trap();
    const IonString s = equilibrium_positions(trap, kConst);
    const ModeSet mx = normal_modes(s, trap, Branch::RadialX);
    const ThermalState tx =
        thermal_occupations(10.0, mx.frequencies.back(), mx, kConst);
    for (int m = 1; m < 10; ++m) CHECK(tx.nbar[m] < tx.nbar[m - 1]);
  }
  SUBCASE("zero-temperature limit") {
    const ThermalState cold =
        thermal_occupations(1e-9, kTwoPi * 2.0940e6, modes, kConst);
    CHECK(cold.nbar[1] < 1e-8);
    CHECK(cold.nbar[0] < 1e-4);
  }
  SUBCASE("invalid reference occupation") {
    CHECK_THROWS_AS(
        (void)thermal_occupations(0.0, kTwoPi * 2.0940e6, modes, kConst), Error);
  }
}

TEST_CASE("reduced Rabi frequency") {
  LambDickeTable table;
  table.eta.resize(1, 1);
  ThermalState thermal;

  SUBCASE("cold string keeps the full coupling (product method)") {
    table.eta(0, 0) = 0.071;
    thermal.nbar = {0.0};
    const auto r = reduced_rabi(1.0, table, thermal, RabiMethod::LambDickeProduct);
    CHECK(r[0] == doctest::Approx(1.0));
  }
  SUBCASE("single-mode suppression factor") {
    table.eta(0, 0) = 0.071;
    thermal.nbar = {19.0};
    const auto r = reduced_rabi(1.0, table, thermal, RabiMethod::LambDickeProduct);
    CHECK(r[0] == doctest::Approx(1.0 - 0.071 * 0.071 * 19.0).epsilon(1e-12));
    CHECK(r[0] == doctest::Approx(0.904221).epsilon(1e-6));
  }
  SUBCASE("the two methods agree within 1% when eta^2 nbar <= 0.1") {
    for (double eta : {0.02, 0.05, 0.071, 0.1}) {
      for (double nbar : {1.0, 5.0, 10.0, 19.0}) {
        if (eta * eta * nbar > 0.1) continue;
        table.eta(0, 0) = eta;
        thermal.nbar = {nbar};
        const double product =
            reduced_rabi(1.0, table, thermal, RabiMethod::LambDickeProduct)[0];
        const double laguerre =
            reduced_rabi(1.0, table, thermal, RabiMethod::LaguerreThermal)[0];
        CHECK(std::abs(product - laguerre) / laguerre < 0.01);
      }
    }
  }
  SUBCASE("ten-ion profile: centre ions are slowest, all below the carrier") {
    const TrapConfiguration trap = ten_ion_trap();
    const IonString s = equilibrium_positions(trap, kConst);
    const ModeSet mx = normal_modes(s, trap, Branch::RadialX);
    const auto ld = lamb_dicke_factors(mx, 393e-9, deg_to_rad(45), kConst);
    const ThermalState tx =
        thermal_occupations(10.0, mx.frequencies.back(), mx, kConst);
    const auto r = reduced_rabi(1.0, ld, tx, RabiMethod::LaguerreThermal);
    for (int i = 0; i < 10; ++i) {
      CHECK(r[i] < 1.0);
      CHECK(r[i] == doctest::Approx(r[9 - i]).epsilon(1e-9));  // symmetry
    }
    CHECK(r[4] < r[0]);
    CHECK(r[4] < r[2]);
  }
}

TEST_CASE("mode set CSV export") {
  TrapConfiguration trap{2, kTwoPi * 0.96e6, kTwoPi * 3e6, kTwoPi * 3e6};
  const IonString s = equilibrium_positions(trap, kConst);
  const ModeSet m = normal_modes(s, trap, Branch::Axial);
  std::ostringstream out;
  write_mode_set_csv(m, out);
  CHECK(out.str().rfind("branch,mode_index,freq_hz,b_1,b_2\n", 0) == 0);
  CHECK(out.str().find("axial,1,960000") != std::string::npos);
}
