#include "ionsim/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ionsim/csv.hpp"
#include "ionsim/rng.hpp"

namespace ionsim::pipeline {

using nlohmann::json;

void ScheduleTimings::validate() const {
  for (double d : {doppler, pump, wait, raman, transport_wait, pi_pulse,
                   detection}) {
    if (d <= 0) {
      throw Error(ErrorCode::InvalidInput, "schedule durations must be positive");
    }
  }
}

void RunConfig::validate() const {
  trap.validate();
  constants.validate();
  geometry.validate();
  beam.validate();
  program.validate();
  schedule.validate();
  if (attempts_per_setting < 1) {
    throw Error(ErrorCode::InvalidInput, "attempts_per_setting must be >= 1");
  }
  if (xi < 0 || xi > 1) {
    throw Error(ErrorCode::InvalidInput, "xi must be in [0, 1]");
  }
  if (depolarizing_floor < 0 || depolarizing_floor > 1) {
    throw Error(ErrorCode::InvalidInput, "depolarizing floor must be in [0, 1]");
  }
  // The raman window must match the wavepacket span so that click times fall
  // inside the detection windows.
  if (std::abs(schedule.raman - pulse_duration) > 1e-12) {
    throw Error(ErrorCode::InvalidInput,
                "schedule raman duration must equal the source pulse duration");
  }
}

namespace {

double get_or(const json& j, const char* key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

// Unit-converted values are rounded to 15 significant digits on the way
// out, which makes load -> save a fixed point (and config hashes stable).
double json_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return std::strtod(buf, nullptr);
}

}  // namespace

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IoError, std::string("config parse error: ") + e.what());
  }

  RunConfig c;
  if (j.contains("trap")) {
    const auto& t = j["trap"];
    c.trap.ion_count = static_cast<int>(get_or(t, "ion_count", c.trap.ion_count));
    c.trap.omega_z = kTwoPi * 1e3 * get_or(t, "omega_z_2pi_khz",
                                           c.trap.omega_z / (kTwoPi * 1e3));
    c.trap.omega_rx = kTwoPi * 1e6 * get_or(t, "omega_rx_2pi_mhz",
                                            c.trap.omega_rx / (kTwoPi * 1e6));
    c.trap.omega_ry = kTwoPi * 1e6 * get_or(t, "omega_ry_2pi_mhz",
                                            c.trap.omega_ry / (kTwoPi * 1e6));
  }
  if (j.contains("string")) {
    const auto& s = j["string"];
    c.raman_wavelength = 1e-9 * get_or(s, "raman_wavelength_nm", 393.0);
    c.projection_angle = deg_to_rad(get_or(s, "projection_angle_deg", 45.0));
    c.nbar_reference = get_or(s, "nbar_reference", 10.0);
    if (s.contains("rabi_method")) {
      const std::string m = s["rabi_method"].get<std::string>();
      if (m == "lamb-dicke-product") {
        c.rabi_method = mechanics::RabiMethod::LambDickeProduct;
      } else if (m == "laguerre-thermal") {
        c.rabi_method = mechanics::RabiMethod::LaguerreThermal;
      } else {
        throw Error(ErrorCode::InvalidInput, "unknown rabi_method: " + m);
      }
    }
  }
  if (j.contains("cavity")) {
    const auto& v = j["cavity"];
    c.finesse = get_or(v, "finesse", c.finesse);
    c.geometry.length = 1e-3 * get_or(v, "length_mm", c.geometry.length * 1e3);
    c.output_transmission = get_or(v, "output_transmission", c.output_transmission);
    c.geometry.waist = 1e-6 * get_or(v, "waist_um", c.geometry.waist * 1e6);
    c.geometry.axis_angle =
        deg_to_rad(get_or(v, "axis_angle_deg", 4.1));
    c.geometry.photon_wavelength =
        1e-9 * get_or(v, "photon_wavelength_nm", 854.0);
    c.geometry.mirror_radius =
        1e-3 * get_or(v, "mirror_radius_mm", c.geometry.mirror_radius * 1e3);
  }
  if (j.contains("source")) {
    const auto& s = j["source"];
    c.g = kTwoPi * 1e6 * get_or(s, "g_2pi_mhz", c.g / (kTwoPi * 1e6));
    c.gamma_eff = kTwoPi * 1e6 * get_or(s, "gamma_eff_2pi_mhz",
                                        c.gamma_eff / (kTwoPi * 1e6));
    c.beam.rabi = kTwoPi * 1e6 * get_or(s, "rabi_2pi_mhz",
                                        c.beam.rabi / (kTwoPi * 1e6));
    c.stark_shift = kTwoPi * 1e6 * get_or(s, "stark_shift_2pi_mhz",
                                          c.stark_shift / (kTwoPi * 1e6));
    c.jitter_sigma = kTwoPi * 1e3 * get_or(s, "jitter_2pi_khz",
                                           c.jitter_sigma / (kTwoPi * 1e3));
    c.jitter_shots = static_cast<int>(get_or(s, "jitter_shots", c.jitter_shots));
    c.pulse_duration = 1e-6 * get_or(s, "pulse_us", c.pulse_duration * 1e6);
    c.beam.waist = 1e-6 * get_or(s, "beam_waist_um", c.beam.waist * 1e6);
    c.time_step = 1e-9 * get_or(s, "time_step_ns", c.time_step * 1e9);
  }
  if (j.contains("shuttle")) {
    const auto& s = j["shuttle"];
    if (s.contains("v_in_volts")) {
      c.program.step_values = s["v_in_volts"].get<std::vector<double>>();
    }
    c.program.interval = 1e-6 * get_or(s, "tp_us", c.program.interval * 1e6);
    c.program.gain = get_or(s, "gain", c.program.gain);
    c.program.bias = get_or(s, "bias_volts", c.program.bias);
    c.waveform_span = 1e-6 * get_or(s, "string_span_um", c.waveform_span * 1e6);
    if (s.contains("filters")) {
      c.filters.clear();
      for (const auto& f : s["filters"]) {
        shuttle::FilterSpec spec;
        spec.order = static_cast<int>(get_or(f, "order", 1));
        spec.cutoff_hz = 1e3 * get_or(f, "cutoff_khz", 35.0);
        spec.zeta = get_or(f, "zeta",
                           spec.order == 2 ? shuttle::kCalibratedZeta : 1.0);
        c.filters.push_back(spec);
      }
    }
  }
  if (j.contains("coherence")) {
    const auto& s = j["coherence"];
    c.field.gradient_g_per_m = get_or(s, "b_grad_g_per_m", 4.4);
    c.field.mis_av_gauss = 1e-6 * get_or(s, "b_mis_av_ugauss", 48.0);
    c.dephasing_sigma = 1e-3 * get_or(s, "sigma_ms", 5.5);
    c.depolarizing_floor = get_or(s, "depolarizing_floor", 0.04);
  }
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    c.schedule.doppler = 1e-3 * get_or(s, "doppler_ms", 8.0);
    c.schedule.pump = 1e-6 * get_or(s, "pump_us", 40.0);
    c.schedule.wait = 1e-6 * get_or(s, "wait_us", 60.0);
    c.schedule.raman = 1e-6 * get_or(s, "raman_us", 80.0);
    c.schedule.transport_wait = 1e-6 * get_or(s, "transport_wait_us", 60.0);
    c.schedule.pi_pulse = 1e-6 * get_or(s, "pi_pulse_us", 6.4);
    c.schedule.detection = 1e-3 * get_or(s, "detection_ms", 5.0);
  }
  if (j.contains("run")) {
    const auto& r = j["run"];
    c.attempts_per_setting = static_cast<long long>(
        get_or(r, "attempts_per_setting", double(c.attempts_per_setting)));
    c.xi = get_or(r, "xi", c.xi);
    c.seed = static_cast<std::uint64_t>(get_or(r, "seed", double(c.seed)));
    c.displacement = 1e-6 * get_or(r, "displacement_um", 0.0);
    c.ripple_amplitude = 1e-6 * get_or(r, "ripple_um",
                                       c.ripple_amplitude * 1e6);
    c.mc_replicates = static_cast<int>(get_or(r, "mc_replicates",
                                              c.mc_replicates));
  }
  if (j.contains("budget") && j["budget"].contains("paths")) {
    c.budget_paths = j["budget"]["paths"].get<std::vector<std::vector<double>>>();
  }
  c.validate();
  return c;
}

std::string RunConfig::to_json() const {
  json j;
  j["trap"] = {{"ion_count", trap.ion_count},
               {"omega_z_2pi_khz", json_num(trap.omega_z / (kTwoPi * 1e3))},
               {"omega_rx_2pi_mhz", json_num(trap.omega_rx / (kTwoPi * 1e6))},
               {"omega_ry_2pi_mhz", json_num(trap.omega_ry / (kTwoPi * 1e6))}};
  j["string"] = {
      {"raman_wavelength_nm", json_num(raman_wavelength * 1e9)},
      {"projection_angle_deg", json_num(projection_angle * 360.0 / kTwoPi)},
      {"nbar_reference", nbar_reference},
      {"rabi_method", rabi_method == mechanics::RabiMethod::LaguerreThermal
                          ? "laguerre-thermal"
                          : "lamb-dicke-product"}};
  j["cavity"] = {{"finesse", finesse},
                 {"length_mm", json_num(geometry.length * 1e3)},
                 {"output_transmission", output_transmission},
                 {"waist_um", json_num(geometry.waist * 1e6)},
                 {"axis_angle_deg", json_num(geometry.axis_angle * 360.0 / kTwoPi)},
                 {"photon_wavelength_nm", json_num(geometry.photon_wavelength * 1e9)},
                 {"mirror_radius_mm", json_num(geometry.mirror_radius * 1e3)}};
  j["source"] = {{"g_2pi_mhz", json_num(g / (kTwoPi * 1e6))},
                 {"gamma_eff_2pi_mhz", json_num(gamma_eff / (kTwoPi * 1e6))},
                 {"rabi_2pi_mhz", json_num(beam.rabi / (kTwoPi * 1e6))},
                 {"stark_shift_2pi_mhz", json_num(stark_shift / (kTwoPi * 1e6))},
                 {"jitter_2pi_khz", json_num(jitter_sigma / (kTwoPi * 1e3))},
                 {"jitter_shots", jitter_shots},
                 {"pulse_us", json_num(pulse_duration * 1e6)},
                 {"beam_waist_um", json_num(beam.waist * 1e6)},
                 {"time_step_ns", json_num(time_step * 1e9)}};
  json filters_json = json::array();
  for (const auto& f : filters) {
    filters_json.push_back({{"order", f.order},
                            {"cutoff_khz", json_num(f.cutoff_hz / 1e3)},
                            {"zeta", json_num(f.zeta)}});
  }
  j["shuttle"] = {{"v_in_volts", program.step_values},
                  {"tp_us", json_num(program.interval * 1e6)},
                  {"gain", program.gain},
                  {"bias_volts", program.bias},
                  {"string_span_um", json_num(waveform_span * 1e6)},
                  {"filters", filters_json}};
  j["coherence"] = {{"b_grad_g_per_m", field.gradient_g_per_m},
                    {"b_mis_av_ugauss", json_num(field.mis_av_gauss * 1e6)},
                    {"sigma_ms", json_num(dephasing_sigma * 1e3)},
                    {"depolarizing_floor", depolarizing_floor}};
  j["schedule"] = {{"doppler_ms", json_num(schedule.doppler * 1e3)},
                   {"pump_us", json_num(schedule.pump * 1e6)},
                   {"wait_us", json_num(schedule.wait * 1e6)},
                   {"raman_us", json_num(schedule.raman * 1e6)},
                   {"transport_wait_us", json_num(schedule.transport_wait * 1e6)},
                   {"pi_pulse_us", json_num(schedule.pi_pulse * 1e6)},
                   {"detection_ms", json_num(schedule.detection * 1e3)}};
  j["run"] = {{"attempts_per_setting", attempts_per_setting},
              {"xi", xi},
              {"seed", seed},
              {"displacement_um", json_num(displacement * 1e6)},
              {"ripple_um", json_num(ripple_amplitude * 1e6)},
              {"mc_replicates", mc_replicates}};
  j["budget"] = {{"paths", budget_paths}};
  return j.dump(2);
}

std::uint64_t config_hash(const RunConfig& config) {
  const std::string s = config.to_json();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

ModelBundle build_model(const RunConfig& config) {
  config.validate();
  ModelBundle m;
  const auto& constants = config.constants;
  const int n = config.trap.ion_count;

  m.string = mechanics::equilibrium_positions(config.trap, constants);
  m.modes_x = mechanics::normal_modes(m.string, config.trap,
                                      mechanics::Branch::RadialX);
  m.modes_y = mechanics::normal_modes(m.string, config.trap,
                                      mechanics::Branch::RadialY);

  // Reference occupation on the highest radial COM mode.
  const double omega_ref =
      std::max(m.modes_x.frequencies.back(), m.modes_y.frequencies.back());
  m.thermal_x = mechanics::thermal_occupations(config.nbar_reference, omega_ref,
                                               m.modes_x, constants);
  m.thermal_y = mechanics::thermal_occupations(config.nbar_reference, omega_ref,
                                               m.modes_y, constants);

  const auto eta_x = mechanics::lamb_dicke_factors(
      m.modes_x, config.raman_wavelength, config.projection_angle, constants);
  const auto eta_y = mechanics::lamb_dicke_factors(
      m.modes_y, config.raman_wavelength, config.projection_angle, constants);
  m.eta_report = mechanics::com_eta_report(eta_x, m.modes_x);

  const auto rx = mechanics::reduced_rabi(config.beam.rabi, eta_x, m.thermal_x,
                                          config.rabi_method);
  const auto ry = mechanics::reduced_rabi(config.beam.rabi, eta_y, m.thermal_y,
                                          config.rabi_method);
  m.reduced_rabi.resize(n);
  for (int i = 0; i < n; ++i) {
    // Suppression factors of the two radial branches combine multiplicatively.
    m.reduced_rabi[i] =
        (rx[i] / config.beam.rabi) * (ry[i] / config.beam.rabi);
  }

  m.cavity = photon::cavity_derived_params(config.finesse, config.geometry.length,
                                           config.output_transmission);
  m.source.g = config.g;
  m.source.kappa = m.cavity.kappa;
  m.source.gamma_eff = config.gamma_eff;
  m.source.detuning = photon::stark_calibrate_detuning(config.beam.rabi,
                                                       config.stark_shift);
  m.source.jitter_sigma = config.jitter_sigma;
  m.source.jitter_shots = config.jitter_shots;
  m.source.escape_probability = m.cavity.escape_probability;
  m.source.pulse_duration = config.pulse_duration;
  m.source.time_step = config.time_step;

  // Shuttle-induced oscillation present when each ion's pulse runs.
  const auto step_amps = shuttle::per_step_amplitudes(
      config.program, config.filters, config.trap.omega_z, config.waveform_span);
  m.com_amplitudes.assign(n, 0.0);
  for (int i = 1; i < n && i - 1 < static_cast<int>(step_amps.size()); ++i) {
    m.com_amplitudes[i] = step_amps[i - 1];
  }

  m.wavepackets.resize(n);
  m.p_cavity.resize(n);
  m.ripple_factors.assign(n, 1.0);
  for (int i = 0; i < n; ++i) {
    photon::IonDriveContext ctx;
    ctx.reduced_rabi = m.reduced_rabi[i] * config.beam.rabi;
    ctx.displacement = config.displacement;
    ctx.osc_amplitude = m.com_amplitudes[i];
    ctx.omega_z = config.trap.omega_z;
    ctx.ripple_amplitude = config.ripple_amplitude;
    m.wavepackets[i] = photon::simulate_photon_generation(
        m.source, ctx, config.geometry, config.beam, config.seed);
    if (config.ripple_amplitude > 0) {
      m.ripple_factors[i] = photon::efficiency_with_ripple(
          m.source, ctx, config.geometry, config.beam, config.ripple_amplitude,
          config.seed, 8);
      // The 50 Hz motion only rescales the efficiency; keep the unrippled
      // wavepacket shape.
      const double base = m.wavepackets[i].total_probability;
      const double target = base * m.ripple_factors[i];
      for (double& d : m.wavepackets[i].density) d *= target / base;
      m.wavepackets[i].total_probability = target;
    }
    m.p_cavity[i] = m.wavepackets[i].total_probability;
  }

  {
    photon::IonDriveContext ideal;
    ideal.reduced_rabi = config.beam.rabi;
    ideal.omega_z = config.trap.omega_z;
    m.p_cavity_ground = photon::simulate_photon_generation(
        m.source, ideal, config.geometry, config.beam, config.seed)
        .total_probability;
  }

  // Coherence model: phases and storage times per ion.
  const auto schedule = coherence::ShuttleSchedule::for_string(m.string.positions);
  m.phases = coherence::accumulate_phases(schedule, config.field,
                                          m.string.positions, constants);
  m.storage_times.resize(n);
  m.pair_states.resize(n);
  const Matrix4cd eye = Matrix4cd::Identity();
  for (int i = 0; i < n; ++i) {
    m.storage_times[i] = schedule.storage_time(i + 1);
    TwoQubitState ideal = bell_state(m.phases[i]);
    TwoQubitState stored =
        coherence::dephase(ideal, m.storage_times[i], config.dephasing_sigma);
    TwoQubitState mixed;
    mixed.rho = (1.0 - config.depolarizing_floor) * stored.rho +
                config.depolarizing_floor * 0.25 * eye;
    m.pair_states[i] = mixed;
  }

  // Voltage calibration: computed positions against the programmed voltages
  // 4 V_in in firing order (first ion at the most positive voltage).
  {
    std::vector<double> volts(config.program.step_values.size());
    for (std::size_t k = 0; k < volts.size(); ++k) {
      volts[k] = config.program.gain * config.program.step_values[k];
    }
    if (static_cast<int>(volts.size()) == n) {
      m.voltage_fit = shuttle::voltage_position_fit(m.string.positions, volts);
    }
  }

  m.budget = photon::detection_budget(config.budget_paths);

  // Born-rule tables per setting for the synthetic measurement draws.
  for (int s = 0; s < tomo::kSettings; ++s) {
    for (int i = 0; i < n && i < 10; ++i) {
      m.joint[s][i] = tomo::outcome_probabilities(m.pair_states[i], s);
      m.ion_up[s][i] = m.joint[s][i][0] + m.joint[s][i][1];
    }
  }
  return m;
}

RunLogs run_experiment(const RunConfig& config, const ModelBundle& model) {
  const int n = config.trap.ion_count;
  if (n != 10) {
    throw Error(ErrorCode::InvalidInput,
                "the synthetic experiment is defined for ten ions");
  }
  const WindowSpec windows;
  if (config.pulse_duration * 1e6 > windows.width_us + 1e-9) {
    throw Error(ErrorCode::InvalidInput,
                "pulse duration exceeds the detection window");
  }

  RunLogs logs;
  logs.attempts_per_setting = config.attempts_per_setting;
  logs.clicks.reserve(static_cast<std::size_t>(
      config.attempts_per_setting * tomo::kSettings * n * config.xi * 0.25) + 64);
  logs.outcomes.reserve(static_cast<std::size_t>(
      config.attempts_per_setting * tomo::kSettings));

  // Per-ion detection probability and arrival-time CDF.
  std::array<double, 10> p_click{};
  std::vector<std::vector<double>> time_cdf(n);
  for (int i = 0; i < n; ++i) {
    p_click[i] = config.xi * model.p_cavity[i];
    const auto& wp = model.wavepackets[i];
    time_cdf[i].resize(wp.density.size());
    double acc = 0;
    for (std::size_t b = 0; b < wp.density.size(); ++b) {
      acc += wp.density[b];
      time_cdf[i][b] = acc;
    }
  }

  for (int s = 0; s < tomo::kSettings; ++s) {
    for (long long a = 0; a < config.attempts_per_setting; ++a) {
      Rng rng = Rng::stream(config.seed,
                            {0xa77e, static_cast<std::uint64_t>(s),
                             static_cast<std::uint64_t>(a)});
      IonOutcomeRecord rec;
      rec.attempt = a;
      rec.setting = s;
      for (int i = 0; i < n; ++i) {
        if (rng.bernoulli(p_click[i])) {
          // Joint ion-photon draw.
          const auto& p4 = model.joint[s][i];
          const double cdf[4] = {p4[0], p4[0] + p4[1], p4[0] + p4[1] + p4[2],
                                 p4[0] + p4[1] + p4[2] + p4[3]};
          const int o = rng.discrete_cdf(std::span<const double>(cdf, 4));
          rec.outcomes[i] = static_cast<std::uint8_t>((o & 2) ? 1 : 0);
          ClickRecord click;
          click.attempt = a;
          click.setting = s;
          click.window = i + 1;
          click.channel = o & 1;
          const int bin = rng.discrete_cdf(time_cdf[i]);
          // bin * 0.2 us on the decimal grid, so the value survives the
          // one-decimal CSV round trip bit-exactly.
          click.time_in_window_us = static_cast<double>(2 * bin) / 10.0;
          logs.clicks.push_back(click);
        } else {
          rec.outcomes[i] =
              static_cast<std::uint8_t>(rng.uniform() < model.ion_up[s][i] ? 0 : 1);
        }
      }
      logs.outcomes.push_back(rec);
    }
  }
  return logs;
}

void write_click_log(const RunLogs& logs, const std::string& path) {
  csv::Writer w(path);
  w.header("attempt_index,setting_id,window_index,detector_channel,time_in_window_us");
  for (const auto& c : logs.clicks) {
    w.field(c.attempt).field(c.setting).field(c.window).field(c.channel);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.1f", c.time_in_window_us);
    w.field(std::string(buf));
    w.end_row();
  }
}

void write_ion_outcomes(const RunLogs& logs, const std::string& path) {
  csv::Writer w(path);
  w.header(
      "attempt_index,setting_id,ion_1,ion_2,ion_3,ion_4,ion_5,ion_6,ion_7,"
      "ion_8,ion_9,ion_10");
  for (const auto& r : logs.outcomes) {
    w.field(r.attempt).field(r.setting);
    for (int i = 0; i < 10; ++i) w.field(static_cast<long long>(r.outcomes[i]));
    w.end_row();
  }
}

RunLogs read_logs(const std::string& clicks_path,
                  const std::string& outcomes_path) {
  RunLogs logs;
  const csv::Table clicks = csv::read_file(clicks_path);
  for (std::size_t r = 0; r < clicks.rows.size(); ++r) {
    ClickRecord c;
    c.attempt = clicks.integer(r, 0);
    c.setting = static_cast<int>(clicks.integer(r, 1));
    c.window = static_cast<int>(clicks.integer(r, 2));
    c.channel = static_cast<int>(clicks.integer(r, 3));
    c.time_in_window_us = clicks.num(r, 4);
    logs.clicks.push_back(c);
  }
  const csv::Table outs = csv::read_file(outcomes_path);
  long long max_attempt = 0;
  for (std::size_t r = 0; r < outs.rows.size(); ++r) {
    IonOutcomeRecord rec;
    rec.attempt = outs.integer(r, 0);
    rec.setting = static_cast<int>(outs.integer(r, 1));
    for (int i = 0; i < 10; ++i) {
      rec.outcomes[i] = static_cast<std::uint8_t>(outs.integer(r, 2 + i));
    }
    max_attempt = std::max(max_attempt, rec.attempt);
    logs.outcomes.push_back(rec);
  }
  logs.attempts_per_setting = max_attempt + 1;
  return logs;
}

double Histogram::window_area(int window) const {
  double area = 0;
  for (int b = 0; b < bins_per_window; ++b) {
    area += density[(window - 1) * bins_per_window + b] * bin_width_us;
  }
  return area;
}

namespace {

// Slots are keyed on (setting, attempt, window); a slot with two or more
// detections is excluded from every single-photon count.
std::uint64_t slot_key(const ClickRecord& c) {
  return (static_cast<std::uint64_t>(c.setting) << 48) |
         (static_cast<std::uint64_t>(c.attempt) << 8) |
         static_cast<std::uint64_t>(c.window);
}

std::vector<std::uint64_t> multi_event_keys(
    const std::vector<ClickRecord>& clicks) {
  std::vector<std::uint64_t> packed;
  packed.reserve(clicks.size());
  for (const auto& c : clicks) packed.push_back(slot_key(c));
  std::sort(packed.begin(), packed.end());
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < packed.size();) {
    std::size_t j = i;
    while (j < packed.size() && packed[j] == packed[i]) ++j;
    if (j - i >= 2) out.push_back(packed[i]);
    i = j;
  }
  return out;
}

bool is_multi(const std::vector<std::uint64_t>& keys, const ClickRecord& c) {
  return std::binary_search(keys.begin(), keys.end(), slot_key(c));
}

}  // namespace

Histogram histogram(const std::vector<ClickRecord>& clicks,
                    const WindowSpec& windows, long long total_attempts,
                    double bin_width_us) {
  if (total_attempts < 1) {
    throw Error(ErrorCode::InvalidInput, "total attempts must be >= 1");
  }
  const double ratio = windows.width_us / bin_width_us;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw Error(ErrorCode::InvalidInput, "bin width must divide the window width");
  }
  Histogram h;
  h.bin_width_us = bin_width_us;
  h.window_count = windows.count;
  h.bins_per_window = static_cast<int>(std::round(ratio));
  h.density.assign(static_cast<std::size_t>(windows.count) * h.bins_per_window,
                   0.0);
  const auto multi = multi_event_keys(clicks);
  const double norm = 1.0 / (static_cast<double>(total_attempts) * bin_width_us);
  for (const auto& c : clicks) {
    if (is_multi(multi, c)) continue;
    const int bin = static_cast<int>(c.time_in_window_us / bin_width_us);
    if (c.window < 1 || c.window > windows.count || bin < 0 ||
        bin >= h.bins_per_window) {
      throw Error(ErrorCode::InvalidInput, "click outside the window grid");
    }
    h.density[(c.window - 1) * h.bins_per_window + bin] += norm;
  }
  return h;
}

WindowCounts window_counts(const std::vector<ClickRecord>& clicks,
                           const WindowSpec& windows) {
  WindowCounts out;
  out.counts.assign(windows.count, 0);
  const auto multi = multi_event_keys(clicks);
  for (const auto& c : clicks) {
    if (c.window < 1 || c.window > windows.count) {
      throw Error(ErrorCode::InvalidInput, "window index out of range");
    }
    if (is_multi(multi, c)) {
      ++out.multi_event_detections;
    } else {
      ++out.counts[c.window - 1];
    }
  }
  out.multi_event_windows = static_cast<long long>(multi.size());
  return out;
}

tomo::CountTable build_count_table(const RunLogs& logs,
                                   const WindowSpec& windows) {
  tomo::CountTable table(10, windows.count);
  // Index outcomes by (setting, attempt).
  std::vector<std::vector<int>> index(
      tomo::kSettings,
      std::vector<int>(static_cast<std::size_t>(logs.attempts_per_setting), -1));
  for (std::size_t r = 0; r < logs.outcomes.size(); ++r) {
    const auto& rec = logs.outcomes[r];
    if (rec.setting < 0 || rec.setting >= tomo::kSettings || rec.attempt < 0 ||
        rec.attempt >= logs.attempts_per_setting) {
      throw Error(ErrorCode::JoinFailure, "outcome record out of range");
    }
    index[rec.setting][static_cast<std::size_t>(rec.attempt)] =
        static_cast<int>(r);
  }
  const auto multi = multi_event_keys(logs.clicks);
  for (const auto& c : logs.clicks) {
    if (is_multi(multi, c)) continue;
    if (c.setting < 0 || c.setting >= tomo::kSettings || c.attempt < 0 ||
        c.attempt >= logs.attempts_per_setting) {
      throw Error(ErrorCode::JoinFailure, "click record out of range");
    }
    const int r = index[c.setting][static_cast<std::size_t>(c.attempt)];
    if (r < 0) {
      throw Error(ErrorCode::JoinFailure,
                  "click without a matching ion-outcome record");
    }
    const auto& rec = logs.outcomes[static_cast<std::size_t>(r)];
    for (int i = 1; i <= 10; ++i) {
      const int outcome = (rec.outcomes[i - 1] << 1) | c.channel;
      table.at(c.setting, i, c.window, outcome) += 1.0;
    }
  }
  return table;
}

RunArtifacts analyze(const RunLogs& logs, const AnalysisOptions& options,
                     const ModelBundle* model) {
  RunArtifacts art;
  art.windows = options.windows;
  art.attempts_per_setting = logs.attempts_per_setting;
  const long long total_attempts = logs.attempts_per_setting * tomo::kSettings;
  art.hist = histogram(logs.clicks, options.windows, total_attempts);
  art.wcounts = window_counts(logs.clicks, options.windows);
  art.p_detected.resize(options.windows.count);
  for (int w = 0; w < options.windows.count; ++w) {
    art.p_detected[w] = static_cast<double>(art.wcounts.counts[w]) /
                        static_cast<double>(total_attempts);
  }
  art.table = build_count_table(logs, options.windows);

  auto& t = art.tomography;
  t.states.clear();
  t.states.reserve(100);
  t.concurrence.resize(10, options.windows.count);
  std::vector<TwoQubitState> matched;
  for (int i = 1; i <= 10; ++i) {
    for (int w = 1; w <= options.windows.count; ++w) {
      const TwoQubitState st = tomo::reconstruct(art.table, i, w);
      t.states.push_back(st);
      t.concurrence(i - 1, w - 1) = tomo::concurrence(st);
      if (i == w) matched.push_back(st);
    }
  }
  const auto zres = tomo::optimize_z_rotations(matched, 8, options.seed);
  t.z_angles = zres.angles;
  std::vector<TwoQubitState> rotated(matched.size());
  for (std::size_t i = 0; i < matched.size(); ++i) {
    const Matrix4cd u = ion_z_rotation(t.z_angles[i]);
    rotated[i].rho = u * matched[i].rho * u.adjoint();
  }
  const auto pres = tomo::optimize_photon_unitary(rotated, 8, options.seed);
  t.photon_unitary_params = pres.params;
  t.bell_fidelities = pres.bell_fidelities;

  const auto mc = tomo::monte_carlo_errors(art.table, options.mc_replicates,
                                           options.seed, t.z_angles,
                                           pres.unitary);
  t.concurrence_stderr = mc.concurrence_stderr;
  t.bell_fidelity_stderr = mc.fidelity_stderr;

  if (model != nullptr) {
    art.has_model = true;
    art.xi_fit = photon::fit_detection_efficiency(art.p_detected, model->p_cavity);
  }
  return art;
}

namespace {

json state_to_json(const TwoQubitState& st) {
  json rows = json::array();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      rows.push_back({st.rho(i, j).real(), st.rho(i, j).imag()});
    }
  }
  return rows;
}

TwoQubitState state_from_json(const json& rows) {
  TwoQubitState st;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const auto& e = rows.at(i * 4 + j);
      st.rho(i, j) = std::complex<double>(e.at(0).get<double>(),
                                          e.at(1).get<double>());
    }
  }
  return st;
}

}  // namespace

void save_artifacts(const RunArtifacts& art, const std::string& path) {
  json j;
  j["windows"] = {{"count", art.windows.count}, {"width_us", art.windows.width_us}};
  j["attempts_per_setting"] = art.attempts_per_setting;
  j["histogram"] = {{"bin_width_us", art.hist.bin_width_us},
                    {"window_count", art.hist.window_count},
                    {"bins_per_window", art.hist.bins_per_window},
                    {"density_per_us", art.hist.density}};
  j["window_counts"] = {{"c", art.wcounts.counts},
                        {"multi_event_windows", art.wcounts.multi_event_windows},
                        {"multi_event_detections", art.wcounts.multi_event_detections}};
  j["p_detected"] = art.p_detected;
  {
    std::ostringstream table;
    art.table.save_csv(table);
    j["count_table_csv"] = table.str();
  }
  json states = json::array();
  for (const auto& st : art.tomography.states) states.push_back(state_to_json(st));
  j["tomography"] = {
      {"states", states},
      {"concurrence", std::vector<std::vector<double>>()},
      {"concurrence_stderr", std::vector<std::vector<double>>()},
      {"z_angles", art.tomography.z_angles},
      {"photon_unitary_params", art.tomography.photon_unitary_params},
      {"bell_fidelities", art.tomography.bell_fidelities},
      {"bell_fidelity_stderr", art.tomography.bell_fidelity_stderr}};
  for (int i = 0; i < art.tomography.concurrence.rows(); ++i) {
    std::vector<double> row(art.tomography.concurrence.cols());
    std::vector<double> erow(art.tomography.concurrence.cols());
    for (int w = 0; w < art.tomography.concurrence.cols(); ++w) {
      row[w] = art.tomography.concurrence(i, w);
      erow[w] = art.tomography.concurrence_stderr(i, w);
    }
    j["tomography"]["concurrence"].push_back(row);
    j["tomography"]["concurrence_stderr"].push_back(erow);
  }
  j["xi_fit"] = {{"xi", art.xi_fit.xi}, {"clamped", art.xi_fit.clamped}};
  j["has_model"] = art.has_model;

  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write artifacts: " + path);
  out << j.dump(1) << "\n";
}

RunArtifacts load_artifacts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read artifacts: " + path);
  json j;
  in >> j;
  RunArtifacts art;
  art.windows.count = j["windows"]["count"].get<int>();
  art.windows.width_us = j["windows"]["width_us"].get<double>();
  art.attempts_per_setting = j["attempts_per_setting"].get<long long>();
  art.hist.bin_width_us = j["histogram"]["bin_width_us"].get<double>();
  art.hist.window_count = j["histogram"]["window_count"].get<int>();
  art.hist.bins_per_window = j["histogram"]["bins_per_window"].get<int>();
  art.hist.density = j["histogram"]["density_per_us"].get<std::vector<double>>();
  art.wcounts.counts = j["window_counts"]["c"].get<std::vector<long long>>();
  art.wcounts.multi_event_windows =
      j["window_counts"]["multi_event_windows"].get<long long>();
  art.wcounts.multi_event_detections =
      j["window_counts"]["multi_event_detections"].get<long long>();
  art.p_detected = j["p_detected"].get<std::vector<double>>();
  {
    std::istringstream table(j["count_table_csv"].get<std::string>());
    art.table = tomo::CountTable::load_csv(table);
  }
  const auto& tj = j["tomography"];
  for (const auto& st : tj["states"]) {
    art.tomography.states.push_back(state_from_json(st));
  }
  const auto conc = tj["concurrence"].get<std::vector<std::vector<double>>>();
  const auto conce =
      tj["concurrence_stderr"].get<std::vector<std::vector<double>>>();
  art.tomography.concurrence.resize(conc.size(), conc.empty() ? 0 : conc[0].size());
  art.tomography.concurrence_stderr.resize(conc.size(),
                                           conc.empty() ? 0 : conc[0].size());
  for (std::size_t i = 0; i < conc.size(); ++i) {
    for (std::size_t w = 0; w < conc[i].size(); ++w) {
      art.tomography.concurrence(i, w) = conc[i][w];
      art.tomography.concurrence_stderr(i, w) = conce[i][w];
    }
  }
  art.tomography.z_angles = tj["z_angles"].get<std::vector<double>>();
  const auto up = tj["photon_unitary_params"].get<std::vector<double>>();
  for (int k = 0; k < 3; ++k) art.tomography.photon_unitary_params[k] = up.at(k);
  art.tomography.bell_fidelities =
      tj["bell_fidelities"].get<std::vector<double>>();
  art.tomography.bell_fidelity_stderr =
      tj["bell_fidelity_stderr"].get<std::vector<double>>();
  art.xi_fit.xi = j["xi_fit"]["xi"].get<double>();
  art.xi_fit.clamped = j["xi_fit"]["clamped"].get<bool>();
  art.has_model = j["has_model"].get<bool>();
  return art;
}

void emit_report(const RunArtifacts& art, const RunConfig& config,
                 const ModelBundle* model, const std::string& outdir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(outdir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + outdir);
  const auto path = [&](const char* name) { return outdir + "/" + name; };

  {
    csv::Writer w(path("histogram.csv"));
    w.header("window_index,time_in_window_us,density_per_us");
    for (int wi = 1; wi <= art.hist.window_count; ++wi) {
      for (int b = 0; b < art.hist.bins_per_window; ++b) {
        w.field(wi);
        w.field(b * art.hist.bin_width_us, 6);
        w.field(art.hist.density[(wi - 1) * art.hist.bins_per_window + b], 9);
        w.end_row();
      }
    }
  }
  {
    csv::Writer w(path("efficiency.csv"));
    w.header("ion,p_measured,p_model");
    for (std::size_t i = 0; i < art.p_detected.size(); ++i) {
      w.field(static_cast<long long>(i + 1));
      w.field(art.p_detected[i], 9);
      const double pm = model != nullptr && i < model->p_cavity.size()
                            ? art.xi_fit.xi * model->p_cavity[i]
                            : 0.0;
      w.field(pm, 9);
      w.end_row();
    }
  }
  {
    csv::Writer w(path("concurrence_grid.csv"));
    w.header("ion,photon,concurrence,std_err");
    for (int i = 0; i < art.tomography.concurrence.rows(); ++i) {
      for (int p = 0; p < art.tomography.concurrence.cols(); ++p) {
        w.field(i + 1).field(p + 1);
        w.field(art.tomography.concurrence(i, p), 9);
        w.field(art.tomography.concurrence_stderr(i, p), 9);
        w.end_row();
      }
    }
  }
  {
    csv::Writer w(path("fidelity.csv"));
    w.header("ion,fidelity,std_err,model_fidelity");
    std::vector<double> model_f;
    if (model != nullptr) {
      // Decoherence-only prediction anchored on the last ion to emit (the
      // shortest storage time).
      const double t_ref = *std::min_element(model->storage_times.begin(),
                                             model->storage_times.end());
      model_f = coherence::fidelity_vs_ion_index(
          bell_state(0.0), model->storage_times, config.dephasing_sigma, t_ref);
    }
    for (std::size_t i = 0; i < art.tomography.bell_fidelities.size(); ++i) {
      w.field(static_cast<long long>(i + 1));
      w.field(art.tomography.bell_fidelities[i], 9);
      w.field(i < art.tomography.bell_fidelity_stderr.size()
                  ? art.tomography.bell_fidelity_stderr[i]
                  : 0.0,
              9);
      w.field(i < model_f.size() ? model_f[i] : 0.0, 9);
      w.end_row();
    }
  }
  {
    csv::Writer w(path("phase_angles.csv"));
    w.header("ion,tomography_angle_rad,model_angle_rad,model_plus_offset_rad");
    // The tomography angles undo the physical rotations; align sign and
    // remove the free global offset against the model.
    std::vector<double> tomo_angle;
    for (double a : art.tomography.z_angles) tomo_angle.push_back(-a);
    double cs = 0.0, sn = 0.0;
    if (model != nullptr) {
      for (std::size_t i = 0; i < tomo_angle.size() && i < model->phases.size();
           ++i) {
        cs += std::cos(tomo_angle[i] - model->phases[i]);
        sn += std::sin(tomo_angle[i] - model->phases[i]);
      }
    }
    const double offset = (cs != 0.0 || sn != 0.0) ? std::atan2(sn, cs) : 0.0;
    for (std::size_t i = 0; i < tomo_angle.size(); ++i) {
      const double mdl =
          model != nullptr && i < model->phases.size() ? model->phases[i] : 0.0;
      w.field(static_cast<long long>(i + 1));
      w.field(wrap_angle(tomo_angle[i]), 9);
      w.field(mdl, 9);
      w.field(wrap_angle(mdl + offset), 9);
      w.end_row();
    }
  }
  if (model != nullptr) {
    csv::Writer w(path("displacement_efficiency.csv"));
    w.header("z_um,frac_eff_ion1,frac_eff_ion5,frac_eff_ion10");
    std::vector<double> grid;
    for (int k = -10; k <= 10; ++k) grid.push_back(0.05e-6 * k);
    std::vector<std::vector<double>> cols;
    for (int ion : {0, 4, 9}) {
      photon::IonDriveContext ctx;
      ctx.reduced_rabi = model->reduced_rabi[ion] * config.beam.rabi;
      ctx.omega_z = config.trap.omega_z;
      cols.push_back(photon::efficiency_vs_displacement(
          model->source, ctx, config.geometry, config.beam, grid, config.seed));
    }
    for (std::size_t k = 0; k < grid.size(); ++k) {
      w.field(grid[k] * 1e6, 6);
      for (const auto& col : cols) w.field(col[k], 9);
      w.end_row();
    }
  }
  if (model != nullptr) {
    csv::Writer w(path("wavepackets_model.csv"));
    w.header("ion,time_us,density_per_us");
    for (std::size_t i = 0; i < model->wavepackets.size(); ++i) {
      const auto& wp = model->wavepackets[i];
      for (std::size_t b = 0; b < wp.density.size(); ++b) {
        w.field(static_cast<long long>(i + 1));
        w.field(b * wp.bin_width * 1e6, 6);
        w.field(wp.density[b] * 1e-6, 9);  // per us
        w.end_row();
      }
    }
  }

  json manifest;
  manifest["config"] = json::parse(config.to_json());
  {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(config_hash(config)));
    manifest["config_hash"] = buf;
  }
  manifest["seed"] = config.seed;
  manifest["attempts_per_setting"] = art.attempts_per_setting;
  manifest["window_counts"] = art.wcounts.counts;
  manifest["multi_event_windows"] = art.wcounts.multi_event_windows;
  manifest["xi_fit"] = {{"xi", art.xi_fit.xi}, {"clamped", art.xi_fit.clamped}};
  if (model != nullptr) {
    manifest["xi_max_budget"] = model->budget.xi_max;
    manifest["budget_paths"] = model->budget.path_totals;
    manifest["delta_2pi_mhz"] = model->source.detuning / (kTwoPi * 1e6);
    manifest["kappa_2pi_khz"] = model->source.kappa / (kTwoPi * 1e3);
    manifest["p_esc"] = model->source.escape_probability;
    manifest["string_span_um"] = model->string.span() * 1e6;
    manifest["eta_com"] = model->eta_report.eta_com;
    manifest["eta_com_total_mass_orthonormal"] =
        model->eta_report.eta_com_total_mass_orthonormal;
    manifest["eta_com_ratio_to_reference"] = model->eta_report.ratio_to_reference;
    manifest["voltage_gradient_nm_per_mv"] =
        std::abs(model->voltage_fit.gradient) * 1e6;
    manifest["p_cavity"] = model->p_cavity;
    manifest["p_cavity_ground"] = model->p_cavity_ground;
    manifest["com_amplitudes_um"] = json::array();
    for (double a : model->com_amplitudes) {
      manifest["com_amplitudes_um"].push_back(a * 1e6);
    }
  }
  std::ofstream out(path("manifest.json"));
  if (!out) throw Error(ErrorCode::IoError, "cannot write manifest");
  out << manifest.dump(1) << "\n";
}

}  // namespace ionsim::pipeline
