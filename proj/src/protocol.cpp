#include "haloscope/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "haloscope/constants.hpp"

namespace haloscope {

const char* to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::kDetect:
      return "DETECT";
    case BlockKind::kCalibrate:
      return "CALIBRATE";
    case BlockKind::kTune:
      return "TUNE";
    case BlockKind::kWait:
      return "WAIT";
  }
  return "WAIT";
}

const char* to_string(Phase phase) { return phase == Phase::kOn ? "ON" : "OFF"; }

double ProtocolTiming::tuning_overhead_s() const {
  return tuning_cycle_s - settle_s - static_cast<double>(repeats) * static_cast<double>(pattern.size()) * pattern_entry_s();
}

void ProtocolTiming::validate() const {
  const auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("protocol: ") + name + " must be positive");
  };
  const auto non_negative = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("protocol: ") + name + " must be non-negative");
    }
  };
  non_negative(ramp_s, "ramp_s");
  non_negative(ramp_pause_s, "ramp_pause_s");
  positive(off_block_s, "off_block_s");
  non_negative(on_block_s, "on_block_s");
  non_negative(settle_s, "settle_s");
  positive(tuning_cycle_s, "tuning_cycle_s");
  non_negative(calibration_s, "calibration_s");
  positive(label_spacing_hz, "label_spacing_hz");
  if (off_block_cycles <= 0 || on_block_cycles < 0) throw std::invalid_argument("protocol: block cycle counts must be positive");
  if (repeats <= 0 || cycles_per_super <= 0) throw std::invalid_argument("protocol: repeat counts must be positive");
  if (pattern.empty()) throw std::invalid_argument("protocol: detuning pattern is empty");
  int on_resonance = 0;
  for (const int label : pattern) {
    if (label < -2 || label > 2) throw std::invalid_argument("protocol: pattern labels must lie in [-2, 2]");
    on_resonance += label == 0 ? 1 : 0;
  }
  if (2 * on_resonance != static_cast<int>(pattern.size())) {
    throw std::invalid_argument("protocol: pattern must spend equal time on and off resonance");
  }
  for (int label = 1; label <= 2; ++label) {
    if (std::count(pattern.begin(), pattern.end(), label) != std::count(pattern.begin(), pattern.end(), -label)) {
      throw std::invalid_argument("protocol: sideband labels must come in +/- pairs");
    }
  }
  if (tuning_overhead_s() < -1e-9) {
    std::ostringstream msg;
    msg << "protocol: tuning_cycle_s = " << tuning_cycle_s << " is shorter than its blocks ("
        << tuning_cycle_s - tuning_overhead_s() << " s)";
    throw std::invalid_argument(msg.str());
  }
}

double TuningPlan::ramp_end_s() const {
  if (speed_hz_per_hour <= 0.0) return 0.0;
  return span_hz / speed_hz_per_hour * constants::seconds_per_hour;
}

void TuningPlan::validate() const {
  if (!(start_hz > 0.0)) throw std::invalid_argument("tuning: start_hz must be positive");
  if (!(speed_hz_per_hour >= 0.0)) throw std::invalid_argument("tuning: speed must be non-negative");
  if (speed_hz_per_hour > kMaxTuningSpeedHzPerHour) {
    std::ostringstream msg;
    msg << "tuning: speed " << speed_hz_per_hour << " Hz/h exceeds the " << kMaxTuningSpeedHzPerHour << " Hz/h cap";
    throw std::invalid_argument(msg.str());
  }
  if (!(span_hz >= 0.0)) throw std::invalid_argument("tuning: span must be non-negative");
}

ProtocolSchedule::ProtocolSchedule(ProtocolTiming timing, TuningPlan plan, std::size_t n_super_cycles)
    : timing_(std::move(timing)), plan_(plan), n_super_(n_super_cycles) {
  timing_.validate();
  plan_.validate();
  period_ = timing_.super_cycle_s();
  if (n_super_ == 0) return;

  double t = 0.0;
  const auto push = [&](double duration, int label, Phase phase, BlockKind kind, std::int64_t cycle) {
    if (duration <= 0.0) return;
    template_.push_back(Block{t, duration, label, phase, kind, cycle});
    t += duration;
  };
  push(timing_.calibration_s, 0, Phase::kOff, BlockKind::kCalibrate, -1);
  for (int c = 0; c < timing_.cycles_per_super; ++c) {
    push(timing_.settle_s, 0, Phase::kOff, BlockKind::kTune, c);
    for (int r = 0; r < timing_.repeats; ++r) {
      for (const int label : timing_.pattern) {
        push(timing_.ramp_s + timing_.ramp_pause_s, label, Phase::kOff, BlockKind::kWait, c);
        push(timing_.off_block_s, label, Phase::kOff, BlockKind::kDetect, c);
        push(timing_.on_block_s, label, Phase::kOn, BlockKind::kDetect, c);
      }
    }
    push(std::max(timing_.tuning_overhead_s(), 0.0), 0, Phase::kOff, BlockKind::kWait, c);
  }
  // Absorb accumulated rounding so the template tiles the period exactly.
  template_.back().duration_s = period_ - template_.back().start_s;
  starts_.reserve(template_.size());
  for (const Block& b : template_) starts_.push_back(b.start_s);
}

Block ProtocolSchedule::materialize(std::size_t super, std::size_t i) const {
  Block b = template_[i];
  const double offset = period_ * static_cast<double>(super);
  b.start_s += offset;
  if (i + 1 < template_.size()) {
    b.duration_s = (template_[i + 1].start_s + offset) - b.start_s;
  } else {
    b.duration_s = period_ * static_cast<double>(super + 1) - b.start_s;
  }
  if (b.cycle >= 0) b.cycle += static_cast<std::int64_t>(super) * timing_.cycles_per_super;
  return b;
}

Block ProtocolSchedule::block(std::size_t index) const {
  if (index >= size()) throw std::out_of_range("schedule: block index out of range");
  return materialize(index / template_.size(), index % template_.size());
}

std::size_t ProtocolSchedule::index_at(double t) const {
  if (empty() || !(t >= 0.0) || !(t < duration_s())) {
    std::ostringstream msg;
    msg << "schedule: t = " << t << " s lies outside [0, " << duration_s() << ")";
    throw std::out_of_range(msg.str());
  }
  auto super = static_cast<std::size_t>(std::floor(t / period_));
  super = std::min(super, n_super_ - 1);
  const double local = t - period_ * static_cast<double>(super);
  const auto it = std::upper_bound(starts_.begin(), starts_.end(), local);
  std::size_t index = super * template_.size() + static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - starts_.begin() - 1, 0));
  // Resolve rounding at boundaries against the materialised block edges.
  while (index > 0 && t < block(index).start_s) --index;
  while (index + 1 < size() && t >= block(index).end_s()) ++index;
  return index;
}

double ProtocolSchedule::nu_c(double t) const {
  const double elapsed = std::clamp(t, 0.0, plan_.ramp_end_s());
  return plan_.start_hz + plan_.speed_hz_per_hour / constants::seconds_per_hour * elapsed;
}

std::vector<std::pair<double, double>> ProtocolSchedule::frequency_knots() const {
  std::vector<std::pair<double, double>> knots;
  if (empty()) return knots;
  const double end = duration_s();
  knots.emplace_back(0.0, nu_c(0.0));
  const double ramp_end = plan_.ramp_end_s();
  if (ramp_end > 0.0 && ramp_end < end) knots.emplace_back(ramp_end, nu_c(ramp_end));
  knots.emplace_back(end, nu_c(end));
  return knots;
}

ProtocolSchedule build_schedule(const ProtocolTiming& timing, const TuningPlan& plan, std::size_t n_super_cycles) {
  return ProtocolSchedule(timing, plan, n_super_cycles);
}

ScheduleState schedule_state(const ProtocolSchedule& schedule, double t) {
  const std::size_t index = schedule.index_at(t);
  const Block b = schedule.block(index);
  ScheduleState s;
  s.label = b.label;
  s.phase = b.phase;
  s.kind = b.kind;
  s.nu_c_hz = schedule.nu_c(t);
  s.delta_hz = schedule.delta_hz(b.label);
  s.block_index = index;
  s.cycle = b.cycle;
  return s;
}

std::vector<CalibrationSlot> calibration_slots(const ProtocolSchedule& schedule) {
  std::vector<CalibrationSlot> slots;
  if (schedule.empty()) return slots;
  const std::size_t per = schedule.blocks_per_super();
  for (std::size_t s = 0; s < schedule.super_cycles(); ++s) {
    for (std::size_t i = 0; i < per; ++i) {
      const Block b = schedule.block(s * per + i);
      if (b.kind != BlockKind::kCalibrate) continue;
      slots.push_back({b.start_s, b.duration_s, {CalibrationTask::kHaloscopeFrequency, CalibrationTask::kSmpdRetune}});
    }
  }
  return slots;
}

ScheduleAudit audit_schedule(const ProtocolSchedule& schedule) {
  ScheduleAudit a;
  a.super_cycles = schedule.super_cycles();
  if (schedule.empty()) return a;
  const std::size_t per = schedule.blocks_per_super();
  for (std::size_t i = 0; i < per; ++i) {
    const Block b = schedule.block(i);
    a.wall_s += b.duration_s;
    if (b.kind != BlockKind::kDetect) continue;
    const bool on_res = b.label == 0;
    (on_res ? a.label0_detect_s : a.sideband_detect_s) += b.duration_s;
    if (b.phase == Phase::kOn) {
      a.detect_on_s += b.duration_s;
    } else {
      a.detect_off_s += b.duration_s;
      (on_res ? a.label0_off_s : a.sideband_off_s) += b.duration_s;
    }
  }
  a.dead_s = a.wall_s - a.detect_off_s;
  return a;
}

}  // namespace haloscope
