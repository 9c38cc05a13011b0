#pragma once

// Seeded click-stream generator for the photon counter running the sensing
// schedule. Clicks come from an inhomogeneous Poisson process sampled by
// thinning; slow noise (efficiency drift, common-mode rate wander) is
// advanced exactly at block boundaries.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "haloscope/protocol.hpp"

namespace haloscope {

struct CycleTiming {
  double pump_s = 10.5e-6;
  double readout_s = 0.8e-6;
  double latency_s = 0.7e-6;
  double wait_s = 0.3e-6;  ///< ground-state path only
  double pi_pulse_s = 0.2e-6;

  double ground_path_s() const { return pump_s + readout_s + latency_s + wait_s; }
  /// One pi-pulse reset and a confirming readout after an excited outcome.
  double excited_path_s() const { return pump_s + 2.0 * (readout_s + latency_s) + pi_pulse_s; }
};

struct ReadoutFidelity {
  double p1_given_e = 0.93;
  double p_thermal = 2e-4;  ///< residual excited population after reset
  double ground_misread = 5e-5;
};

enum class ReadoutMode {
  kFolded,    ///< readout errors absorbed into eta and the intrinsic rate
  kPerCycle,  ///< clicks drawn per detection cycle with explicit fidelities
};

struct EfficiencyDrift {
  double relative_std = 0.005;  ///< stationary std of the unbounded process
  double correlation_s = 300.0;
  double amplitude = 0.10;  ///< hard bound on |eta - eta0| / eta0
};

struct RateWalk {
  double diffusion = 3e-4;  ///< (1/s)^2 per s
  double reversion_s = 14400.0;

  double stationary_std() const;
};

struct SmpdParams {
  ProtocolTiming protocol;
  CycleTiming cycle;
  ReadoutFidelity readout;
  ReadoutMode readout_mode = ReadoutMode::kFolded;

  double kappa_b_hz = 0.7e6;
  double eta0 = 0.46;
  double gamma_int = 10.0;
  double dnu_det_hz = 175e3;
  double n_th = 1.0186e-3;
  /// When positive, n_th follows the Bose factor of this line temperature at
  /// the cavity frequency.
  double line_temperature_k = 0.0;
  EfficiencyDrift drift;
  RateWalk walk;
  bool drift_enabled = true;
  bool walk_enabled = true;
  /// Photon flux of the calibration tone during signal-ON blocks [1/s].
  double probe_flux = 1000.0;

  double thermal_rate_coefficient(double nu_hz) const;  ///< dnu_det * n_th
  void validate() const;
};

struct TruthParams {
  double signal_rate = 0.0;  ///< photons/s leaving the cavity on resonance
  /// Axion line position; 0 keeps the signal locked to the cavity.
  double signal_frequency_hz = 0.0;
  /// Cavity linewidth used to weight a located signal; required when
  /// signal_frequency_hz is set.
  double cavity_linewidth_hz = 0.0;
  double k_b_true = 0.04;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ClickRecord {
  double t = 0.0;
  int label = 0;
  Phase phase = Phase::kOff;

  bool operator==(const ClickRecord&) const = default;
};

struct ClickStream {
  std::vector<ClickRecord> clicks;
  std::uint64_t seed = 0;
  double live_time_s = 0.0;  ///< total DETECT time
  double duration_s = 0.0;
};

/// Lorentzian buffer acceptance 1 / (1 + (2 delta / kappa_b)^2).
double buffer_acceptance(double delta_hz, double kappa_b_hz);

/// Slow noise state; defaults give the nominal detector.
struct NoiseState {
  double drift = 0.0;  ///< unbounded OU variable (relative)
  double walk = 0.0;   ///< additive rate offset [1/s]
};

double efficiency(const SmpdParams& params, const NoiseState& noise);

double instantaneous_rate(const ScheduleState& state, const SmpdParams& params, const TruthParams& truth,
                          const NoiseState& noise = {});

class ClickGenerator {
 public:
  using Sink = std::function<void(const ClickRecord&)>;

  ClickGenerator(const ProtocolSchedule& schedule, SmpdParams params, TruthParams truth);

  /// Walk the whole schedule, handing each click to `sink` in time order.
  /// Returns the DETECT live time.
  double run(const Sink& sink);

  /// Called at every DETECT block start with the noise state in force for it.
  void on_block(std::function<void(const Block&, const NoiseState&)> observer) { observer_ = std::move(observer); }

 private:
  void advance_noise(double dt);
  void sample_block(const Block& block, const Sink& sink);
  void sample_block_per_cycle(const Block& block, const Sink& sink);

  const ProtocolSchedule& schedule_;
  SmpdParams params_;
  TruthParams truth_;
  std::mt19937_64 rng_;
  NoiseState noise_;
  std::function<void(const Block&, const NoiseState&)> observer_;
};

ClickStream generate_click_stream(const ProtocolSchedule& schedule, const SmpdParams& params,
                                  const TruthParams& truth);

struct CycleTimingReport {
  double measured_cycle_s = 0.0;  ///< OFF block time / cycles per block
  double model_cycle_s = 0.0;     ///< from the pulse sequence at the nominal rate
  double off_block_s = 0.0;
  double label0_off_per_super_s = 0.0;
  double differential_duty = 0.0;
  double super_cycle_s = 0.0;
  double dead_time_s = 0.0;
  double dead_fraction = 0.0;
};

CycleTimingReport cycle_timing(const SmpdParams& params);

}  // namespace haloscope
