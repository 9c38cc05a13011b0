#include "haloscope/smpd_sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "haloscope/axion_physics.hpp"

namespace haloscope {

namespace {

void require_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string("smpd: ") + name + " must lie in [0, 1]");
}

void require_non_negative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string("smpd: ") + name + " must be non-negative");
  }
}

double lorentzian(double offset_hz, double full_width_hz) {
  const double u = 2.0 * offset_hz / full_width_hz;
  return 1.0 / (1.0 + u * u);
}

}  // namespace

double RateWalk::stationary_std() const { return std::sqrt(diffusion * reversion_s / 2.0); }

double SmpdParams::thermal_rate_coefficient(double nu_hz) const {
  const double occupation = line_temperature_k > 0.0 ? thermal_occupation(nu_hz, line_temperature_k) : n_th;
  return dnu_det_hz * occupation;
}

void SmpdParams::validate() const {
  protocol.validate();
  for (const double v : {cycle.pump_s, cycle.readout_s, cycle.latency_s, cycle.wait_s, cycle.pi_pulse_s}) {
    if (!(v > 0.0)) throw std::invalid_argument("smpd: cycle timings must be positive");
  }
  const double mean_cycle = protocol.off_block_s / static_cast<double>(protocol.off_block_cycles);
  if (mean_cycle < 12e-6 || mean_cycle > 18e-6) {
    throw std::invalid_argument("smpd: mean detection cycle must lie in [12, 18] us, got " +
                                std::to_string(mean_cycle * 1e6) + " us");
  }
  require_probability(readout.p1_given_e, "p1_given_e");
  require_probability(readout.p_thermal, "p_thermal");
  require_probability(readout.ground_misread, "ground_misread");
  if (!(kappa_b_hz > 0.0)) throw std::invalid_argument("smpd: kappa_b_hz must be positive");
  if (!(eta0 > 0.0 && eta0 <= 1.0)) throw std::invalid_argument("smpd: eta0 must lie in (0, 1]");
  require_non_negative(gamma_int, "gamma_int");
  require_non_negative(dnu_det_hz, "dnu_det_hz");
  require_non_negative(n_th, "n_th");
  require_non_negative(line_temperature_k, "line_temperature_k");
  require_non_negative(drift.relative_std, "drift.relative_std");
  require_non_negative(drift.amplitude, "drift.amplitude");
  if (!(drift.correlation_s > 0.0)) throw std::invalid_argument("smpd: drift.correlation_s must be positive");
  if (eta0 * (1.0 + drift.amplitude) > 1.0 && drift_enabled) {
    throw std::invalid_argument("smpd: eta0 * (1 + drift.amplitude) exceeds 1");
  }
  require_non_negative(walk.diffusion, "walk.diffusion");
  if (!(walk.reversion_s > 0.0)) throw std::invalid_argument("smpd: walk.reversion_s must be positive");
  require_non_negative(probe_flux, "probe_flux");
}

void TruthParams::validate() const {
  require_non_negative(signal_rate, "signal_rate");
  require_non_negative(signal_frequency_hz, "signal_frequency_hz");
  require_non_negative(k_b_true, "k_b_true");
  if (signal_frequency_hz > 0.0 && !(cavity_linewidth_hz > 0.0)) {
    throw std::invalid_argument("truth: a located signal needs cavity_linewidth_hz > 0");
  }
}

double buffer_acceptance(double delta_hz, double kappa_b_hz) {
  if (!(kappa_b_hz > 0.0)) throw std::invalid_argument("buffer_acceptance: kappa_b must be positive");
  return lorentzian(delta_hz, kappa_b_hz);
}

double efficiency(const SmpdParams& params, const NoiseState& noise) {
  if (!params.drift_enabled || params.drift.amplitude == 0.0) return params.eta0;
  const double a = params.drift.amplitude;
  return params.eta0 * (1.0 + a * std::tanh(noise.drift / a));
}

namespace {

struct RateParts {
  double base = 0.0;          ///< everything except a located signal
  double signal_peak = 0.0;   ///< located-signal term with the cavity weight at 1
};

RateParts rate_parts(const ScheduleState& state, const SmpdParams& params, const TruthParams& truth,
                     const NoiseState& noise) {
  const double eta = efficiency(params, noise);
  const double buffer_hz = state.nu_c_hz + state.delta_hz;
  double photons = params.thermal_rate_coefficient(state.nu_c_hz) * (1.0 + (state.label == 0 ? truth.k_b_true : 0.0));
  RateParts parts;
  if (truth.signal_rate > 0.0) {
    if (truth.signal_frequency_hz > 0.0) {
      parts.signal_peak = eta * truth.signal_rate *
                          buffer_acceptance(truth.signal_frequency_hz - buffer_hz, params.kappa_b_hz);
    } else {
      photons += truth.signal_rate * buffer_acceptance(state.delta_hz, params.kappa_b_hz);
    }
  }
  if (state.phase == Phase::kOn) photons += params.probe_flux;
  parts.base = params.gamma_int + eta * photons + (params.walk_enabled ? noise.walk : 0.0);
  return parts;
}

double cavity_weight(const TruthParams& truth, double nu_c_hz) {
  return lorentzian(truth.signal_frequency_hz - nu_c_hz, truth.cavity_linewidth_hz);
}

}  // namespace

double instantaneous_rate(const ScheduleState& state, const SmpdParams& params, const TruthParams& truth,
                          const NoiseState& noise) {
  const RateParts parts = rate_parts(state, params, truth, noise);
  const double signal = parts.signal_peak > 0.0 ? parts.signal_peak * cavity_weight(truth, state.nu_c_hz) : 0.0;
  return std::max(parts.base + signal, 0.0);
}

ClickGenerator::ClickGenerator(const ProtocolSchedule& schedule, SmpdParams params, TruthParams truth)
    : schedule_(schedule), params_(std::move(params)), truth_(truth), rng_(truth.seed) {
  params_.validate();
  truth_.validate();
  // Start both slow processes in their stationary distributions.
  std::normal_distribution<double> normal;
  noise_.drift = params_.drift.relative_std * normal(rng_);
  noise_.walk = params_.walk.stationary_std() * normal(rng_);
}

void ClickGenerator::advance_noise(double dt) {
  if (dt <= 0.0) return;
  std::normal_distribution<double> normal;
  const double zd = normal(rng_);
  const double zw = normal(rng_);
  const double decay_d = std::exp(-dt / params_.drift.correlation_s);
  noise_.drift = noise_.drift * decay_d + params_.drift.relative_std * std::sqrt(1.0 - decay_d * decay_d) * zd;
  const double decay_w = std::exp(-dt / params_.walk.reversion_s);
  noise_.walk = noise_.walk * decay_w + params_.walk.stationary_std() * std::sqrt(1.0 - decay_w * decay_w) * zw;
}

void ClickGenerator::sample_block(const Block& block, const Sink& sink) {
  ScheduleState state;
  state.label = block.label;
  state.phase = block.phase;
  state.kind = block.kind;
  state.delta_hz = schedule_.delta_hz(block.label);
  state.cycle = block.cycle;
  state.nu_c_hz = schedule_.nu_c(block.start_s);
  const RateParts parts = rate_parts(state, params_, truth_, noise_);
  const double bound = std::max(parts.base, 0.0) + parts.signal_peak;
  if (!(bound > 0.0)) return;
  const bool exact = parts.signal_peak == 0.0;
  std::exponential_distribution<double> gap(bound);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double end = block.end_s();
  double t = block.start_s;
  while (true) {
    t += gap(rng_);
    if (t >= end) break;
    if (!exact) {
      const double signal = parts.signal_peak * cavity_weight(truth_, schedule_.nu_c(t));
      if (uniform(rng_) * bound >= std::max(parts.base + signal, 0.0)) continue;
    }
    sink(ClickRecord{t, block.label, block.phase});
  }
}

void ClickGenerator::sample_block_per_cycle(const Block& block, const Sink& sink) {
  const std::int64_t cycles =
      block.phase == Phase::kOn ? params_.protocol.on_block_cycles : params_.protocol.off_block_cycles;
  if (cycles <= 0) return;
  const double period = block.duration_s / static_cast<double>(cycles);
  // Clicks are stamped at the end of the readout pulse, or mid-cycle if the
  // nominal sequence does not fit the measured period.
  const double readout_end = params_.cycle.pump_s + params_.cycle.readout_s;
  const double stamp = readout_end < period ? readout_end : 0.5 * period;

  ScheduleState state;
  state.label = block.label;
  state.phase = block.phase;
  state.delta_hz = schedule_.delta_hz(block.label);
  state.nu_c_hz = schedule_.nu_c(block.start_s + 0.5 * block.duration_s);
  const double rate = instantaneous_rate(state, params_, truth_, noise_);
  // Physical excitation rate such that the mean click rate matches the
  // folded model; misreads and residual thermal population add on top of a
  // detected excitation with probability p(1|e).
  const double false_click = params_.readout.ground_misread + params_.readout.p_thermal * params_.readout.p1_given_e;
  const double physical = std::max(rate * period - false_click, 0.0) / params_.readout.p1_given_e;
  const double p_excited = -std::expm1(-physical);
  const double p_click = std::clamp(params_.readout.p1_given_e * p_excited + false_click, 0.0, 1.0);
  if (p_click <= 0.0) return;

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double log_miss = std::log1p(-p_click);
  std::int64_t index = -1;
  while (true) {
    const double u = 1.0 - uniform(rng_);
    const double skip = p_click >= 1.0 ? 0.0 : std::floor(std::log(u) / log_miss);
    if (skip >= static_cast<double>(cycles)) break;
    index += 1 + static_cast<std::int64_t>(skip);
    if (index >= cycles) break;
    sink(ClickRecord{block.start_s + static_cast<double>(index) * period + stamp, block.label, block.phase});
  }
}

double ClickGenerator::run(const Sink& sink) {
  double live = 0.0;
  double last = 0.0;
  schedule_.for_each_block([&](const Block& block) {
    if (block.kind != BlockKind::kDetect) return;
    advance_noise(block.start_s - last);
    last = block.start_s;
    if (observer_) observer_(block, noise_);
    live += block.duration_s;
    if (params_.readout_mode == ReadoutMode::kPerCycle) {
      sample_block_per_cycle(block, sink);
    } else {
      sample_block(block, sink);
    }
  });
  return live;
}

ClickStream generate_click_stream(const ProtocolSchedule& schedule, const SmpdParams& params,
                                  const TruthParams& truth) {
  ClickStream stream;
  stream.seed = truth.seed;
  stream.duration_s = schedule.duration_s();
  ClickGenerator gen(schedule, params, truth);
  stream.live_time_s = gen.run([&](const ClickRecord& c) { stream.clicks.push_back(c); });
  return stream;
}

CycleTimingReport cycle_timing(const SmpdParams& params) {
  params.validate();
  CycleTimingReport r;
  r.off_block_s = params.protocol.off_block_s;
  r.measured_cycle_s = params.protocol.off_block_s / static_cast<double>(params.protocol.off_block_cycles);
  const double nominal_rate =
      params.gamma_int + params.eta0 * params.thermal_rate_coefficient(7.3696e9);
  const double p_click = std::clamp(nominal_rate * params.cycle.ground_path_s(), 0.0, 1.0);
  r.model_cycle_s = (1.0 - p_click) * params.cycle.ground_path_s() + p_click * params.cycle.excited_path_s();

  const ProtocolSchedule one(params.protocol, TuningPlan{}, 1);
  const ScheduleAudit audit = audit_schedule(one);
  r.label0_off_per_super_s = audit.label0_off_s;
  r.differential_duty = audit.differential_duty();
  r.super_cycle_s = audit.wall_s;
  r.dead_time_s = audit.dead_s;
  r.dead_fraction = audit.dead_fraction();
  return r;
}

}  // namespace haloscope
