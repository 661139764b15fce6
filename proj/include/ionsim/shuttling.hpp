#pragma once

#include <span>
#include <vector>

#include "ionsim/constants.hpp"

namespace ionsim::shuttle {

/// Endcap waveform program: the generator's step values, amplified by
/// `gain` and biased by `bias`, produce electrode voltages
/// bias +- gain * V_in(t).
struct VoltageStepProgram {
  // V_in,j (V); defaults are the measured ten-ion shuttling values.
  std::vector<double> step_values = {4.450, 3.900, 3.400, 2.950, 2.550,
                                     2.120, 1.700, 1.250, 0.750, 0.200};
  double interval = 156e-6;         // t_p (s)
  double gain = 4.0;
  double bias = 160.0;              // V

  void validate() const;
  int step_count() const { return static_cast<int>(step_values.size()) - 1; }
};

/// trap-electronics chain default: first-order 35 kHz, then a second-order
/// 80 kHz stage whose damping is calibrated against the observed step
/// response (see default_filter_chain()).
struct FilterSpec {
  int order = 1;
  double cutoff_hz = 35e3;
  double zeta = 1.0;  // order-2 damping ratio; ignored for order 1

  void validate() const;
};

/// Damping of the 80 kHz stage fitted so the simulated post-step
/// oscillation amplitudes reproduce the measured 0.02 / 0.21 um pair.
inline constexpr double kCalibratedZeta = 1.79222;

std::vector<FilterSpec> default_filter_chain();

/// Piecewise-constant position command before filtering. Values in metres;
/// steps occur at `step_times`.
struct StepSignal {
  std::vector<double> step_times;   // s, ascending
  std::vector<double> levels;       // m, levels.size() == step_times.size()+1
  double end_time = 0.0;            // last step time

  double value_at(double t) const;
};

struct PositionCommand {
  double dt = 1e-8;                 // s
  std::vector<double> samples;      // m
  double last_step_time = 0.0;      // s
};

struct ComTrajectory {
  double dt = 1e-8;
  std::vector<double> z;            // m
  double amplitude = 0.0;           // extracted A_com (m)
  double residual_offset = 0.0;     // mean of z - c over the window (m)
};

/// Converts the program's voltage steps to a position step signal whose
/// relative step heights follow the successive voltage differences,
/// normalised so the total sweep equals `total_span` (string length).
StepSignal synthesize_waveform(const VoltageStepProgram& program,
                               double total_span = 49e-6);

/// Applies the filter stages in sequence (exact zero-order-hold
/// discretisation, DC gain exactly 1) on a uniform grid. `tail` extends the
/// command past the last step.
PositionCommand apply_filter_chain(const StepSignal& signal,
                                   std::span<const FilterSpec> filters,
                                   double dt = 1e-8, double tail = 120e-6);

/// Fractional voltage (or position) change still to come after time t for a
/// first-order stage: exp(-t/tau).
double residual_settling(double tau, double t);

/// Integrates z'' = -omega_z^2 (z - c(t)) from rest at c(0) and extracts
/// A_com as half the peak-to-peak of z - c over one trap period starting
/// `extraction_delay` after the last step.
ComTrajectory com_trajectory(const PositionCommand& command, double omega_z,
                             double extraction_delay = 60e-6);

/// A_com as a function of the inter-step interval t_p.
std::vector<double> scan_step_timing(const VoltageStepProgram& program,
                                     std::span<const FilterSpec> filters,
                                     double omega_z,
                                     std::span<const double> tp_grid,
                                     double total_span = 49e-6);

/// Oscillation amplitude present after each step of the program (entry k =
/// amplitude after step k+1), used for the per-ion drive contexts.
std::vector<double> per_step_amplitudes(const VoltageStepProgram& program,
                                        std::span<const FilterSpec> filters,
                                        double omega_z,
                                        double total_span = 49e-6);

struct ExtraFilterReport {
  double reduction_single = 0.0;  // A_com without / with, first step alone
  double reduction_nine = 0.0;    // same for the worst-case full program
  double settling_factor = 0.0;   // time to reach the baseline 60 us residual
};

ExtraFilterReport evaluate_extra_filter(const VoltageStepProgram& program,
                                        std::span<const FilterSpec> filters,
                                        const FilterSpec& extra,
                                        double omega_z,
                                        double total_span = 49e-6);

struct LineFit {
  double gradient = 0.0;
  double intercept = 0.0;
  double gradient_stderr = 0.0;
};

/// Ordinary least squares of position on voltage.
LineFit voltage_position_fit(std::span<const double> positions,
                             std::span<const double> voltages);

/// Calibration scan of the dark-state pumping probability versus laser-focus
/// position (AOD frequency): Gaussian profile parameters and the sinusoidal
/// modulation measured at fixed focus.
struct DarkStateScan {
  double p0 = 0.8;        // Gaussian peak
  double f0 = 0.0;        // Gaussian centre (Hz)
  double tau = 0.0;       // Gaussian width (Hz)
  double amplitude = 0.0; // A_P, sinusoid amplitude in probability
  double offset = 0.0;    // P_offset
  double phase = 0.0;

  void validate() const;
};

/// Inverts the Gaussian as f(P) = f0 + sqrt(-2 tau^2 ln(P/P0)), takes the
/// half-difference of f at P_offset +- A_P and converts with c (m per Hz).
double amplitude_from_darkstate_scan(const DarkStateScan& scan,
                                     double conversion);

/// P = p0 exp(-(f-f0)^2 / (2 tau^2)) least squares via log-parabola.
void fit_darkstate_gaussian(std::span<const double> freqs,
                            std::span<const double> p_dark,
                            DarkStateScan& scan);

/// P(t) = A sin(omega t + phase) + offset with omega known (linear LS).
void fit_darkstate_sinusoid(std::span<const double> times,
                            std::span<const double> p_dark, double omega,
                            DarkStateScan& scan);

}  // namespace ionsim::shuttle
