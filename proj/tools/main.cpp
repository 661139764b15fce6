// Command-line front end: synthetic runs, log analysis, shuttle studies and
// the small calibration fits. All results land in files; exit code 0 on
// success, otherwise a machine-readable error object on stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ionsim/csv.hpp"
#include "ionsim/pipeline.hpp"

namespace {

using namespace ionsim;

pipeline::RunConfig load_config(const std::string& path) {
  if (path.empty()) {
    pipeline::RunConfig c;
    c.validate();
    return c;
  }
  return pipeline::RunConfig::from_json_file(path);
}

int cmd_simulate(const std::string& config_path, const std::string& outdir) {
  pipeline::RunConfig config = load_config(config_path);
  std::filesystem::create_directories(outdir);

  std::cout << "building model..." << std::endl;
  const pipeline::ModelBundle model = pipeline::build_model(config);
  std::cout << "running " << config.attempts_per_setting
            << " attempts per setting..." << std::endl;
  const pipeline::RunLogs logs = pipeline::run_experiment(config, model);
  pipeline::write_click_log(logs, outdir + "/clicks.csv");
  pipeline::write_ion_outcomes(logs, outdir + "/ion_outcomes.csv");

  std::cout << "analyzing " << logs.clicks.size() << " detections..."
            << std::endl;
  pipeline::AnalysisOptions opts;
  opts.mc_replicates = config.mc_replicates;
  opts.seed = config.seed;
  const pipeline::RunArtifacts artifacts = pipeline::analyze(logs, opts, &model);
  pipeline::save_artifacts(artifacts, outdir + "/artifacts.json");
  pipeline::emit_report(artifacts, config, &model, outdir);

  {
    std::ofstream modes(outdir + "/modes.csv");
    mechanics::write_mode_set_csv(model.modes_x, modes);
    mechanics::write_mode_set_csv(model.modes_y, modes, false);
  }
  std::cout << "report written to " << outdir << std::endl;
  return 0;
}

int cmd_analyze(const std::string& clicks, const std::string& outcomes,
                const std::string& config_path, const std::string& outdir) {
  pipeline::RunConfig config = load_config(config_path);
  std::filesystem::create_directories(outdir);
  const pipeline::RunLogs logs = pipeline::read_logs(clicks, outcomes);
  pipeline::AnalysisOptions opts;
  opts.mc_replicates = config.mc_replicates;
  opts.seed = config.seed;
  const pipeline::RunArtifacts artifacts = pipeline::analyze(logs, opts, nullptr);
  pipeline::save_artifacts(artifacts, outdir + "/artifacts.json");
  pipeline::emit_report(artifacts, config, nullptr, outdir);
  std::cout << "report written to " << outdir << std::endl;
  return 0;
}

int cmd_shuttle(const std::string& steps_file, double tp_us,
                const std::string& filters_arg, double extra_cutoff_khz,
                double omega_z_khz, const std::string& outdir) {
  shuttle::VoltageStepProgram program;
  if (!steps_file.empty()) {
    const csv::Table t = csv::read_file(steps_file, false);
    program.step_values.clear();
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      program.step_values.push_back(t.num(r, 0));
    }
  }
  program.interval = tp_us * 1e-6;

  std::vector<shuttle::FilterSpec> filters;
  if (filters_arg.empty()) {
    filters = shuttle::default_filter_chain();
  } else {
    // order:cutoff_khz[:zeta], comma separated
    std::string token;
    std::istringstream in(filters_arg);
    while (std::getline(in, token, ',')) {
      shuttle::FilterSpec f;
      double zeta = -1;
      int fields = std::sscanf(token.c_str(), "%d:%lf:%lf", &f.order,
                               &f.cutoff_hz, &zeta);
      if (fields < 2) {
        throw Error(ErrorCode::InvalidInput,
                    "bad filter token '" + token + "' (want order:cutoff_khz[:zeta])");
      }
      f.cutoff_hz *= 1e3;
      f.zeta = zeta > 0 ? zeta : (f.order == 2 ? shuttle::kCalibratedZeta : 1.0);
      filters.push_back(f);
    }
  }

  const double omega_z = kTwoPi * omega_z_khz * 1e3;
  std::filesystem::create_directories(outdir);

  const shuttle::StepSignal signal = shuttle::synthesize_waveform(program);
  const shuttle::PositionCommand command =
      shuttle::apply_filter_chain(signal, filters);
  const shuttle::ComTrajectory traj = shuttle::com_trajectory(command, omega_z);

  {
    csv::Writer w(outdir + "/waveform.csv");
    w.header("t_us,command_um,z_um");
    // 0.1 us output decimation keeps files small.
    const auto stride = static_cast<std::size_t>(
        std::max(1.0, std::round(0.1e-6 / command.dt)));
    for (std::size_t i = 0; i < command.samples.size(); i += stride) {
      w.field(i * command.dt * 1e6, 9);
      w.field(command.samples[i] * 1e6, 9);
      w.field(traj.z[i] * 1e6, 9);
      w.end_row();
    }
  }

  nlohmann::json summary;
  summary["a_com_um"] = traj.amplitude * 1e6;
  summary["residual_offset_um"] = traj.residual_offset * 1e6;
  if (extra_cutoff_khz > 0) {
    const shuttle::FilterSpec extra{1, extra_cutoff_khz * 1e3, 1.0};
    const auto report =
        shuttle::evaluate_extra_filter(program, filters, extra, omega_z);
    summary["extra_filter"] = {
        {"cutoff_khz", extra_cutoff_khz},
        {"reduction_single", report.reduction_single},
        {"reduction_nine", report.reduction_nine},
        {"settling_factor", report.settling_factor}};
  }
  std::ofstream out(outdir + "/shuttle_summary.json");
  out << summary.dump(1) << "\n";
  std::cout << "A_com = " << traj.amplitude * 1e6 << " um; summary in "
            << outdir << std::endl;
  return 0;
}

int cmd_fit(const std::string& kind, const std::string& input,
            const std::string& output) {
  const csv::Table t = csv::read_file(input);
  nlohmann::json result;
  if (kind == "xi") {
    std::vector<double> pd, pc;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      pd.push_back(t.num(r, 0));
      pc.push_back(t.num(r, 1));
    }
    const auto fit = photon::fit_detection_efficiency(pd, pc);
    result = {{"xi", fit.xi}, {"clamped", fit.clamped}};
  } else if (kind == "ramsey") {
    std::vector<double> times, contrast;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      times.push_back(t.num(r, 0) * 1e-3);  // ms in file
      contrast.push_back(t.num(r, 1));
    }
    const auto fit = coherence::ramsey_contrast_fit(times, contrast);
    result = {{"sigma_ms", fit.sigma * 1e3},
              {"sigma_stderr_ms", fit.sigma_stderr * 1e3}};
  } else if (kind == "voltage") {
    std::vector<double> pos, volts;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      pos.push_back(t.num(r, 0) * 1e-6);  // um in file
      volts.push_back(t.num(r, 1));       // V in file
    }
    const auto fit = shuttle::voltage_position_fit(pos, volts);
    result = {{"gradient_nm_per_mv", std::abs(fit.gradient) * 1e6},
              {"gradient_stderr_nm_per_mv", fit.gradient_stderr * 1e6},
              {"intercept_um", fit.intercept * 1e6}};
  } else {
    throw Error(ErrorCode::InvalidInput, "unknown fit kind: " + kind);
  }
  if (output.empty()) {
    std::cout << result.dump(1) << std::endl;
  } else {
    std::ofstream out(output);
    out << result.dump(1) << "\n";
    std::cout << "fit written to " << output << std::endl;
  }
  return 0;
}

int cmd_report(const std::string& artifacts_dir, const std::string& config_path) {
  pipeline::RunConfig config = load_config(config_path);
  const pipeline::RunArtifacts artifacts =
      pipeline::load_artifacts(artifacts_dir + "/artifacts.json");
  pipeline::emit_report(artifacts, config, nullptr, artifacts_dir);
  std::cout << "report regenerated in " << artifacts_dir << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ten-ion photon-interface simulator and analysis toolkit"};
  app.require_subcommand(1);

  std::string config_path, outdir = "out", clicks, outcomes, artifacts_dir;
  std::string steps_file, filters_arg, fit_input, fit_output, fit_kind;
  double tp_us = 156.0, extra_cutoff_khz = 0.0, omega_z_khz = 358.0;

  auto* simulate = app.add_subcommand("simulate", "run the synthetic experiment");
  simulate->add_option("--config", config_path, "JSON run configuration");
  simulate->add_option("--out", outdir, "output directory")->required();

  auto* analyze = app.add_subcommand("analyze", "analyse recorded logs");
  analyze->add_option("--clicks", clicks, "click log CSV")->required();
  analyze->add_option("--outcomes", outcomes, "ion outcome CSV")->required();
  analyze->add_option("--config", config_path, "JSON run configuration");
  analyze->add_option("--out", outdir, "output directory")->required();

  auto* shuttle_cmd = app.add_subcommand("shuttle", "shuttling waveform study");
  shuttle_cmd->add_option("--steps-file", steps_file,
                          "CSV of V_in values (one per row)");
  shuttle_cmd->add_option("--tp-us", tp_us, "inter-step interval (us)");
  shuttle_cmd->add_option("--filters", filters_arg,
                          "chain as order:cutoff_khz[:zeta],...");
  shuttle_cmd->add_option("--extra-cutoff-khz", extra_cutoff_khz,
                          "evaluate an extra first-order filter");
  shuttle_cmd->add_option("--omega-z-khz", omega_z_khz, "axial COM frequency");
  shuttle_cmd->add_option("--out", outdir, "output directory")->required();

  auto* fit = app.add_subcommand("fit", "calibration fits");
  fit->add_option("kind", fit_kind, "xi | ramsey | voltage")->required();
  fit->add_option("--in", fit_input, "input CSV")->required();
  fit->add_option("--out", fit_output, "output JSON (stdout if omitted)");

  auto* report = app.add_subcommand("report", "regenerate report CSVs");
  report->add_option("--artifacts", artifacts_dir, "artifacts directory")
      ->required();
  report->add_option("--config", config_path, "JSON run configuration");

  try {
    app.parse(argc, argv);
    if (simulate->parsed()) return cmd_simulate(config_path, outdir);
    if (analyze->parsed()) return cmd_analyze(clicks, outcomes, config_path, outdir);
    if (shuttle_cmd->parsed()) {
      return cmd_shuttle(steps_file, tp_us, filters_arg, extra_cutoff_khz,
                         omega_z_khz, outdir);
    }
    if (fit->parsed()) return cmd_fit(fit_kind, fit_input, fit_output);
    if (report->parsed()) return cmd_report(artifacts_dir, config_path);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ionsim::Error& e) {
    nlohmann::json err = {{"error", {{"type", e.code_name()}, {"message", e.what()}}}};
    std::cerr << err.dump() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json err = {{"error", {{"type", "internal"}, {"message", e.what()}}}};
    std::cerr << err.dump() << std::endl;
    return 2;
  }
  return 0;
}
