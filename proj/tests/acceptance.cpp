// Acceptance suite: one line per criterion, nonzero exit when any check
// fails. Runs the full ten-ion model plus a complete synthetic data set, so
// expect a couple of minutes of wall time.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ionsim/coherence.hpp"
#include "ionsim/pipeline.hpp"
#include "ionsim/rng.hpp"

using namespace ionsim;

namespace {

struct Criterion {
  int id;
  std::string label;
  bool ok = true;
  std::string detail;

  void band(const char* name, double value, double lo, double hi) {
    char buf[160];
    const bool good = value >= lo && value <= hi;
    std::snprintf(buf, sizeof buf, "%s%s=%.5g (want %.5g..%.5g)%s",
                  detail.empty() ? "" : "; ", name, value, lo, hi,
                  good ? "" : " [FAIL]");
    detail += buf;
    ok = ok && good;
  }
  void at_least(const char* name, double value, double lo) {
    char buf[160];
    const bool good = value >= lo;
    std::snprintf(buf, sizeof buf, "%s%s=%.5g (want >=%.5g)%s",
                  detail.empty() ? "" : "; ", name, value, lo,
                  good ? "" : " [FAIL]");
    detail += buf;
    ok = ok && good;
  }
  void at_most(const char* name, double value, double hi) {
    char buf[160];
    const bool good = value <= hi;
    std::snprintf(buf, sizeof buf, "%s%s=%.5g (want <=%.5g)%s",
                  detail.empty() ? "" : "; ", name, value, hi,
                  good ? "" : " [FAIL]");
    detail += buf;
    ok = ok && good;
  }
  void require(const char* name, bool good) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s%s%s", detail.empty() ? "" : "; ", name,
                  good ? "" : " [FAIL]");
    detail += buf;
    ok = ok && good;
  }
};

std::vector<Criterion> results;

Criterion& start(int id, const std::string& label) {
  results.push_back(Criterion{id, label, true, {}});
  return results.back();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const PhysicalConstants kConst;

}  // namespace

int main() {
  using namespace ionsim::mechanics;
  using namespace ionsim::photon;
  namespace fs = std::filesystem;

  pipeline::RunConfig config;  // calibrated defaults
  config.attempts_per_setting = 54000;
  config.mc_replicates = 100;
  config.seed = 20260809;

  std::fprintf(stderr, "building calibrated model...\n");
  const pipeline::ModelBundle model = pipeline::build_model(config);

  // ---- 1: thermal occupation transfer between modes ----
  {
    auto& c = start(1, "thermal model");
    ModeSet probe;
    probe.branch = Branch::RadialX;
    probe.frequencies = {kTwoPi * 1.1273e6, kTwoPi * 2.0940e6};
    probe.eigenvectors = Eigen::MatrixXd::Identity(2, 2);
    const ThermalState t =
        thermal_occupations(10.0, kTwoPi * 2.0940e6, probe, kConst);
    c.band("nbar(1.1273 MHz)", t.nbar[0], 18.5, 19.5);
  }

  // ---- 2: string geometry ----
  {
    auto& c = start(2, "string geometry");
    c.band("ten-ion span (um)", model.string.span() * 1e6, 48.0, 50.0);
    TrapConfiguration two{2, kTwoPi * 0.96e6, kTwoPi * 3e6, kTwoPi * 3e6};
    const IonString s2 = equilibrium_positions(two, kConst);
    c.band("two-ion separation (um)", (s2.positions[1] - s2.positions[0]) * 1e6,
           5.69, 5.79);
  }

  // ---- 3: lowest radial mode pattern ----
  {
    auto& c = start(3, "mode structure");
    const double reference[10] = {0.0002, 0.003, 0.016, 0.044, 0.071,
                                  0.071,  0.044, 0.016, 0.003, 0.0002};
    Eigen::VectorXd zig = model.modes_x.eigenvectors.col(0).cwiseAbs();
    zig /= zig.maxCoeff();
    double worst = 0;
    for (int i = 0; i < 10; ++i) {
      if (reference[i] < 0.016) continue;
      worst = std::max(worst,
                       std::abs(zig[i] * 0.071 / reference[i] - 1.0));
    }
    c.at_most("pattern rel. deviation (entries >= 0.016)", worst, 0.10);
  }

  // ---- 4: settling fraction ----
  {
    auto& c = start(4, "settling");
    c.band("exp(-60/4.1)", shuttle::residual_settling(4.1e-6, 60e-6), 4.1e-7,
           4.5e-7);
  }

  // ---- 5: shuttling equation of motion ----
  {
    auto& c = start(5, "shuttling EOM");
    shuttle::VoltageStepProgram program;  // measured values, t_p = 156 us
    const auto chain = shuttle::default_filter_chain();
    const double omega_z = config.trap.omega_z;

    shuttle::VoltageStepProgram single = program;
    single.step_values = {program.step_values[0], program.step_values[1]};
    const double d1 = 49e-6 * (program.step_values[0] - program.step_values[1]) /
                      (program.step_values[0] - program.step_values.back());
    const auto s1 = shuttle::synthesize_waveform(single, d1);
    const auto c1 = shuttle::apply_filter_chain(s1, chain);
    c.band("single-step A_com (um)",
           shuttle::com_trajectory(c1, omega_z).amplitude * 1e6, 0.015, 0.025);

    shuttle::VoltageStepProgram coherent = program;
    coherent.interval =
        std::round(program.interval * omega_z / kTwoPi) * kTwoPi / omega_z;
    const auto s9 = shuttle::synthesize_waveform(coherent, 49e-6);
    const auto c9 = shuttle::apply_filter_chain(s9, chain);
    c.band("worst-case nine-step A_com (um)",
           shuttle::com_trajectory(c9, omega_z).amplitude * 1e6, 0.19, 0.23);

    const auto extra = shuttle::evaluate_extra_filter(
        program, chain, shuttle::FilterSpec{1, 40e3, 1.0}, omega_z);
    c.at_least("extra-filter reduction (single)", extra.reduction_single, 10.0);
    c.at_least("extra-filter reduction (nine)", extra.reduction_nine, 10.0);
    c.at_most("extra-filter settling factor", extra.settling_factor, 1.15);
  }

  // ---- 6: voltage calibration ----
  {
    auto& c = start(6, "voltage calibration");
    const double gradient = std::abs(model.voltage_fit.gradient) * 1e6;  // nm/mV
    c.band("gradient (nm/mV)", gradient, 2.849, 2.949);
    c.band("42.5 mV ripple (nm)", gradient * 42.5, 120.0, 126.0);
  }

  // ---- 7: cavity parameters ----
  {
    auto& c = start(7, "cavity parameters");
    c.band("kappa/2pi (kHz)", model.cavity.kappa / kTwoPi / 1e3, 124.0, 128.0);
    c.band("P_esc", model.cavity.escape_probability, 0.42, 0.44);
  }

  // ---- 8: displacement / oscillation efficiency ----
  {
    auto& c = start(8, "displacement and oscillation model");
    const double ratios[2] = {model.reduced_rabi.front(),
                              model.reduced_rabi[4]};  // string extremes
    double eff02_lo = 1.0, eff02_hi = 0.0, drop01 = 0.0;
    for (double r : ratios) {
      IonDriveContext ctx;
      ctx.reduced_rabi = r * config.beam.rabi;
      ctx.omega_z = config.trap.omega_z;
      const double e02 = symmetric_displacement_efficiency(
          model.source, ctx, config.geometry, config.beam, 0.2e-6, config.seed);
      const double e01 = symmetric_displacement_efficiency(
          model.source, ctx, config.geometry, config.beam, 0.1e-6, config.seed);
      eff02_lo = std::min(eff02_lo, e02);
      eff02_hi = std::max(eff02_hi, e02);
      drop01 = std::max(drop01, 1.0 - e01);
    }
    c.band("eff(+-0.2 um) min", eff02_lo, 0.87, 0.92);
    c.band("eff(+-0.2 um) max", eff02_hi, 0.87, 0.92);
    c.at_most("drop(+-0.1 um)", drop01, 0.015);

    IonDriveContext ion10;
    ion10.reduced_rabi = model.reduced_rabi.back() * config.beam.rabi;
    ion10.omega_z = config.trap.omega_z;
    c.band("eff(A=0.2 um, z0=0)",
           efficiency_with_oscillation(model.source, ion10, config.geometry,
                                       config.beam, 0.2e-6, 0.0, config.seed),
           0.97, 0.99);
    c.band("eff(A=0.2 um, z0=0.2 um)",
           efficiency_with_oscillation(model.source, ion10, config.geometry,
                                       config.beam, 0.2e-6, 0.2e-6, config.seed),
           0.82, 0.88);
  }

  // ---- 9: thermal efficiency profile ----
  {
    auto& c = start(9, "thermal efficiency profile");
    // Thermal-only contexts: no shuttle oscillation, no ripple, no jitter.
    PhotonSourceModel quiet = model.source;
    quiet.jitter_sigma = 0.0;
    std::vector<double> p(10);
    for (int i = 0; i < 10; ++i) {
      IonDriveContext ctx;
      ctx.reduced_rabi = model.reduced_rabi[i] * config.beam.rabi;
      ctx.omega_z = config.trap.omega_z;
      p[i] = simulate_photon_generation(quiet, ctx, config.geometry,
                                        config.beam, config.seed)
                 .total_probability;
    }
    IonDriveContext ideal;
    ideal.reduced_rabi = config.beam.rabi;
    ideal.omega_z = config.trap.omega_z;
    const double p0 = simulate_photon_generation(quiet, ideal, config.geometry,
                                                 config.beam, config.seed)
                          .total_probability;
    c.band("P_c(ion5)/P_c(ion1)", p[4] / p[0], 0.82, 0.92);
    double gain = 0;
    for (double pi : p) gain += p0 / pi / 10.0;
    c.band("ground-state cooling gain", gain, 1.12, 1.22);
  }

  // ---- 10: decoherence model ----
  {
    auto& c = start(10, "decoherence");
    const TwoQubitState bell = bell_state(0.0);
    const double t_ref = model.storage_times.back();
    const auto f = coherence::fidelity_vs_ion_index(
        bell, model.storage_times, config.dephasing_sigma, t_ref);
    c.band("fidelity drop ion10 - ion1", f[9] - f[0], 0.015, 0.025);
    const TwoQubitState stored = coherence::dephase(bell, 1.4e-3, 5.5e-3);
    c.band("F(Bell, 1.4 ms)", tomo::fidelity_to_pure(stored, bell_ket(0.0)),
           0.983, 0.985);
  }

  // ---- 11: tomography oracle equivalence ----
  {
    auto& c = start(11, "tomography oracles");
    auto noiseless = [](const TwoQubitState& st, double shots) {
      tomo::CountTable t(1, 1);
      for (int s = 0; s < tomo::kSettings; ++s) {
        const auto p = tomo::outcome_probabilities(st, s);
        for (int o = 0; o < 4; ++o) t.at(s, 1, 1, o) = shots * p[o];
      }
      return t;
    };
    const TwoQubitState bell = bell_state(0.0);
    const auto bell_rec = tomo::reconstruct(noiseless(bell, 1e6), 1, 1);
    c.at_least("F(reconstructed Bell)",
               tomo::fidelity_to_pure(bell_rec, bell_ket(0.0)), 0.99);
    c.at_least("C(reconstructed Bell)", tomo::concurrence(bell_rec), 0.99);

    TwoQubitState mixed;
    mixed.rho = 0.25 * Matrix4cd::Identity();
    c.at_most("C(I/4)", tomo::concurrence(tomo::reconstruct(
                            noiseless(mixed, 1e6), 1, 1)),
              0.01);
    TwoQubitState product;
    product.rho = Matrix4cd::Zero();
    product.rho(3, 3) = 1.0;
    c.at_most("C(product)", tomo::concurrence(tomo::reconstruct(
                                noiseless(product, 1e6), 1, 1)),
              0.01);
    double worst = 0;
    for (double p : {0.0, 1.0 / 3.0, 0.8, 1.0}) {
      TwoQubitState w;
      w.rho = p * bell.rho + (1 - p) * 0.25 * Matrix4cd::Identity();
      const double expect = std::max(0.0, (3 * p - 1) / 2);
      const double got =
          tomo::concurrence(tomo::reconstruct(noiseless(w, 1e6), 1, 1));
      worst = std::max(worst, std::abs(got - expect));
    }
    c.at_most("Werner concurrence error", worst, 0.01);

    // Multinomially sampled Bell data at 1e6 shots per setting.
    Rng rng = Rng::stream(config.seed, {0xacce});
    tomo::CountTable sampled(1, 1);
    for (int s = 0; s < tomo::kSettings; ++s) {
      const auto p = tomo::outcome_probabilities(bell, s);
      const double cdf[4] = {p[0], p[0] + p[1], p[0] + p[1] + p[2], 1.0};
      for (long k = 0; k < 1000000; ++k) {
        sampled.at(s, 1, 1, rng.discrete_cdf(std::span<const double>(cdf, 4))) +=
            1.0;
      }
    }
    const auto rec = tomo::reconstruct(sampled, 1, 1);
    c.at_least("F at 1e6 shots/setting",
               tomo::fidelity_to_pure(rec, bell_ket(0.0)), 0.995);
    c.at_least("C at 1e6 shots/setting", tomo::concurrence(rec), 0.99);
  }

  // ---- the full synthetic data set used by 12, 13 and 14 ----
  std::fprintf(stderr, "running the synthetic experiment (54000/setting)...\n");
  const pipeline::RunLogs logs = pipeline::run_experiment(config, model);
  pipeline::AnalysisOptions opts;
  opts.mc_replicates = config.mc_replicates;
  opts.seed = config.seed;
  std::fprintf(stderr, "analyzing %zu detections...\n", logs.clicks.size());
  const pipeline::RunArtifacts art = pipeline::analyze(logs, opts, &model);

  // ---- 12: phase model against the tomography rotations ----
  {
    auto& c = start(12, "phase model");
    bool monotone = true;
    for (int i = 1; i < 10; ++i) {
      monotone = monotone && model.phases[i] > model.phases[i - 1];
    }
    c.require("monotone angle sequence", monotone);
    // Recovered undo-angles match -phase up to one global offset.
    double cs = 0, sn = 0;
    for (int i = 0; i < 10; ++i) {
      cs += std::cos(art.tomography.z_angles[i] + model.phases[i]);
      sn += std::sin(art.tomography.z_angles[i] + model.phases[i]);
    }
    const double offset = std::atan2(sn, cs);
    double worst = 0;
    for (int i = 0; i < 10; ++i) {
      worst = std::max(worst,
                       std::abs(wrap_angle(art.tomography.z_angles[i] +
                                           model.phases[i] - offset)));
    }
    c.at_most("max |angle residual| (rad)", worst, 0.05);
  }

  // ---- 13: end-to-end statistical closure ----
  {
    auto& c = start(13, "statistical closure");
    const double total = static_cast<double>(config.attempts_per_setting * 9);
    double worst_pull = 0;
    for (int i = 0; i < 10; ++i) {
      const double expected = config.xi * model.p_cavity[i];
      const double sigma = std::sqrt(expected * (1 - expected) / total);
      worst_pull = std::max(worst_pull,
                            std::abs(art.p_detected[i] - expected) / sigma);
    }
    c.at_most("max |P_i - xi P_c,i| pull (sigma)", worst_pull, 3.0);

    double min_matched = 1.0;
    double worst_unmatched = 0.0;
    for (int i = 1; i <= 10; ++i) {
      min_matched = std::min(min_matched, art.tomography.concurrence(i - 1, i - 1));
      for (int w = 1; w <= 10; ++w) {
        if (i == w) continue;
        const double excess =
            art.tomography.concurrence(i - 1, w - 1) -
            3.0 * art.tomography.concurrence_stderr(i - 1, w - 1);
        worst_unmatched = std::max(worst_unmatched, excess);
      }
    }
    c.at_least("min matched concurrence", min_matched, 0.8);
    c.at_most("max unmatched C - 3 sigma", worst_unmatched, 1e-6);
  }

  // ---- 14: determinism ----
  {
    auto& c = start(14, "determinism");
    const std::string dir1 = "/tmp/ionsim_accept_run1";
    const std::string dir2 = "/tmp/ionsim_accept_run2";
    fs::create_directories(dir1);
    fs::create_directories(dir2);

    const pipeline::RunLogs again = pipeline::run_experiment(config, model);
    pipeline::write_click_log(logs, dir1 + "/clicks.csv");
    pipeline::write_click_log(again, dir2 + "/clicks.csv");
    pipeline::write_ion_outcomes(logs, dir1 + "/ion_outcomes.csv");
    pipeline::write_ion_outcomes(again, dir2 + "/ion_outcomes.csv");
    c.require("click logs byte-identical",
              slurp(dir1 + "/clicks.csv") == slurp(dir2 + "/clicks.csv"));
    c.require("outcome logs byte-identical",
              slurp(dir1 + "/ion_outcomes.csv") ==
                  slurp(dir2 + "/ion_outcomes.csv"));

    const pipeline::RunArtifacts art2 = pipeline::analyze(again, opts, &model);
    pipeline::emit_report(art, config, &model, dir1);
    pipeline::emit_report(art2, config, &model, dir2);
    bool reports_equal = true;
    for (const char* name :
         {"manifest.json", "histogram.csv", "efficiency.csv",
          "concurrence_grid.csv", "fidelity.csv", "phase_angles.csv"}) {
      reports_equal =
          reports_equal && slurp(dir1 + "/" + name) == slurp(dir2 + "/" + name);
    }
    c.require("reports byte-identical", reports_equal);
    fs::remove_all(dir1);
    fs::remove_all(dir2);
  }

  int failures = 0;
  for (const auto& c : results) {
    std::printf("[%2d] %-34s %s  (%s)\n", c.id, c.label.c_str(),
                c.ok ? "PASS" : "FAIL", c.detail.c_str());
    if (!c.ok) ++failures;
  }
  std::printf("%zu criteria checked, %d failed\n", results.size(), failures);
  return failures == 0 ? 0 : 1;
}
