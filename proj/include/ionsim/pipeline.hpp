#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ionsim/coherence.hpp"
#include "ionsim/photon_source.hpp"
#include "ionsim/shuttling.hpp"
#include "ionsim/string_mechanics.hpp"
#include "ionsim/tomography.hpp"

namespace ionsim::pipeline {

struct ScheduleTimings {
  double doppler = 8e-3;
  double pump = 40e-6;
  double wait = 60e-6;
  double raman = 80e-6;
  double transport_wait = 60e-6;
  double pi_pulse = 6.4e-6;
  double detection = 5e-3;

  void validate() const;
};

/// Full run description. Defaults reproduce the calibrated ten-ion setup;
/// every quantity can be overridden from the JSON config (see README for the
/// schema with unit-suffixed keys).
struct RunConfig {
  mechanics::TrapConfiguration trap;
  PhysicalConstants constants;

  // string / thermal model
  double raman_wavelength = 393e-9;
  double projection_angle = deg_to_rad(45.0);
  double nbar_reference = 10.0;
  mechanics::RabiMethod rabi_method = mechanics::RabiMethod::LaguerreThermal;

  // cavity
  double finesse = 30e3;
  double output_transmission = 0.78 * kTwoPi / 54e3;  // T2 from the high-F row
  photon::CavityGeometry geometry;

  // source
  photon::RamanBeam beam;
  double stark_shift = kTwoPi * 1.26e6;
  double g = kTwoPi * 1.53e6;
  double gamma_eff = kTwoPi * 23.0e6;
  double jitter_sigma = kTwoPi * 10e3;
  int jitter_shots = 16;
  double pulse_duration = 80e-6;
  double time_step = 10e-9;

  // shuttling
  shuttle::VoltageStepProgram program;
  std::vector<shuttle::FilterSpec> filters = shuttle::default_filter_chain();
  double waveform_span = 49e-6;

  // coherence
  coherence::FieldModel field;
  double dephasing_sigma = 5.5e-3;
  double depolarizing_floor = 0.04;

  ScheduleTimings schedule;

  // run
  long long attempts_per_setting = 54000;
  double xi = 0.36;
  std::uint64_t seed = 20260809;
  double displacement = 0.0;       // systematic z0 per ion (m)
  double ripple_amplitude = 0.1e-6; // 50 Hz amplitude (m), quasi-static
  int mc_replicates = 100;

  std::vector<std::vector<double>> budget_paths = {
      {0.96, 0.84, 0.73, 0.80}, {0.96, 0.84, 0.68, 0.88}};

  void validate() const;

  static RunConfig from_json_file(const std::string& path);
  std::string to_json() const;
};

std::uint64_t config_hash(const RunConfig& config);

/// Everything derivable from the configuration before any random draw:
/// string geometry, modes, thermal state, per-ion efficiencies and
/// wavepackets, shuttle amplitudes, accumulated phases and pair states.
struct ModelBundle {
  mechanics::IonString string;
  mechanics::ModeSet modes_x, modes_y;
  mechanics::ThermalState thermal_x, thermal_y;
  std::vector<double> reduced_rabi;        // Omega_i^r / Omega per ion
  mechanics::ComEtaReport eta_report;
  photon::CavityParams cavity;
  photon::PhotonSourceModel source;        // calibrated (kappa, Delta, ...)
  std::vector<double> com_amplitudes;      // A_com before each ion's pulse (m)
  std::vector<double> ripple_factors;      // quasi-static 50 Hz efficiency
  std::vector<photon::Wavepacket> wavepackets;  // per ion
  std::vector<double> p_cavity;            // P_c,i including ripple factor
  double p_cavity_ground = 0.0;            // all nbar = 0, ideal drive
  std::vector<double> phases;              // U_z angles per ion (rad)
  std::vector<double> storage_times;       // s per ion
  std::vector<TwoQubitState> pair_states;  // ion-photon state per matched pair
  shuttle::LineFit voltage_fit;            // positions vs 4 V_in
  photon::DetectionBudget budget;

  // Born probabilities per (setting, ion): joint outcome table and the ion
  // marginal used when no photon is detected.
  std::array<std::array<std::array<double, 4>, 10>, tomo::kSettings> joint{};
  std::array<std::array<double, 10>, tomo::kSettings> ion_up{};
};

ModelBundle build_model(const RunConfig& config);

struct ClickRecord {
  long long attempt = 0;
  int setting = 0;
  int window = 0;   // 1..10
  int channel = 0;  // 0 = +1 outcome port
  double time_in_window_us = 0.0;  // quantised to 0.2 us
};

struct IonOutcomeRecord {
  long long attempt = 0;
  int setting = 0;
  std::array<std::uint8_t, 10> outcomes{};  // 0 = +1 outcome
};

struct RunLogs {
  std::vector<ClickRecord> clicks;
  std::vector<IonOutcomeRecord> outcomes;
  long long attempts_per_setting = 0;
};

/// Synthetic experiment: per attempt and ion, photon detection with
/// probability xi * P_c,i, joint ion-photon outcome from the pair state's
/// Born probabilities, marginal ion outcome otherwise. Byte-identical for a
/// fixed (config, seed).
RunLogs run_experiment(const RunConfig& config, const ModelBundle& model);

void write_click_log(const RunLogs& logs, const std::string& path);
void write_ion_outcomes(const RunLogs& logs, const std::string& path);
RunLogs read_logs(const std::string& clicks_path, const std::string& outcomes_path);

struct WindowSpec {
  int count = 10;
  double width_us = 80.0;
};

struct Histogram {
  double bin_width_us = 0.2;
  int window_count = 10;
  int bins_per_window = 400;
  std::vector<double> density;  // per us, window-major

  double window_area(int window) const;  // integral over one window
};

/// Probability density of arrival times: counts / (attempts * bin width).
/// Only single-detection windows contribute (multi-event windows are
/// excluded from all counting).
Histogram histogram(const std::vector<ClickRecord>& clicks,
                    const WindowSpec& windows, long long total_attempts,
                    double bin_width_us = 0.2);

struct WindowCounts {
  std::vector<long long> counts;          // c_i, single-detection windows
  long long multi_event_windows = 0;      // attempt-window slots with >= 2
  long long multi_event_detections = 0;   // events inside those slots
};

WindowCounts window_counts(const std::vector<ClickRecord>& clicks,
                           const WindowSpec& windows);

/// Joins every single-detection window event with the same attempt's ion
/// outcomes, filling the conditioned count table for all (ion, window) pairs.
tomo::CountTable build_count_table(const RunLogs& logs,
                                   const WindowSpec& windows);

struct TomographyResult {
  std::vector<TwoQubitState> states;     // row-major (ion-1)*10 + window-1
  Eigen::MatrixXd concurrence;           // 10 x 10
  Eigen::MatrixXd concurrence_stderr;
  std::vector<double> z_angles;
  std::array<double, 3> photon_unitary_params{};
  std::vector<double> bell_fidelities;
  std::vector<double> bell_fidelity_stderr;
};

struct RunArtifacts {
  WindowSpec windows;
  long long attempts_per_setting = 0;
  Histogram hist;
  WindowCounts wcounts;
  std::vector<double> p_detected;  // c_i / total attempts
  tomo::CountTable table;
  TomographyResult tomography;
  photon::XiFit xi_fit;            // vs model P_c when available
  bool has_model = false;

  RunArtifacts() : table(10, 10) {}
};

struct AnalysisOptions {
  WindowSpec windows;
  int mc_replicates = 100;
  std::uint64_t seed = 1;
};

RunArtifacts analyze(const RunLogs& logs, const AnalysisOptions& options,
                     const ModelBundle* model = nullptr);

/// Writes the report CSVs and the JSON manifest into `outdir`.
void emit_report(const RunArtifacts& artifacts, const RunConfig& config,
                 const ModelBundle* model, const std::string& outdir);

/// Serialisation of artifacts for the `report` subcommand.
void save_artifacts(const RunArtifacts& artifacts, const std::string& path);
RunArtifacts load_artifacts(const std::string& path);

}  // namespace ionsim::pipeline
