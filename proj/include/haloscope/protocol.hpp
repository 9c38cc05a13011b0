#pragma once

// Nested sensing schedule. One super-cycle is a calibration slot followed by
// `cycles_per_super` tuning cycles; each tuning cycle is a positioner step,
// `repeats` passes over the buffer-detuning pattern and a bookkeeping wait.
// Every pattern entry is a flux ramp, a signal-OFF dark-count block and a
// signal-ON efficiency block.
//
// The schedule is periodic, so only one super-cycle of blocks is stored and
// lookups are O(log n) in the template size.

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace haloscope {

enum class BlockKind { kDetect, kCalibrate, kTune, kWait };
enum class Phase { kOff, kOn };

const char* to_string(BlockKind kind);
const char* to_string(Phase phase);

struct ProtocolTiming {
  double ramp_s = 0.72e-3;
  double ramp_pause_s = 0.1e-3;
  double off_block_s = 99.075e-3;  ///< 8001 detection cycles, signal OFF
  std::int64_t off_block_cycles = 8001;
  double on_block_s = 9.91e-3;  ///< 801 detection cycles, signal ON
  std::int64_t on_block_cycles = 801;
  std::vector<int> pattern{0, 0, 1, 2, 2, 1, 0, 0, 0, 0, -1, -2, -2, -1, 0, 0};
  int repeats = 36;
  double settle_s = 5.0;  ///< positioner pulse plus wait
  /// Full tuning-cycle span; whatever the blocks above leave is one WAIT.
  double tuning_cycle_s = 84.2;
  int cycles_per_super = 10;
  double calibration_s = 78.0;
  double label_spacing_hz = 1e6;

  double pattern_entry_s() const { return ramp_s + ramp_pause_s + off_block_s + on_block_s; }
  double tuning_overhead_s() const;
  double super_cycle_s() const { return calibration_s + cycles_per_super * tuning_cycle_s; }

  /// Throws std::invalid_argument for non-positive durations, labels outside
  /// [-2, 2], an asymmetric pattern or a tuning cycle too short for its blocks.
  void validate() const;
};

inline constexpr double kMaxTuningSpeedHzPerHour = 12e3;

struct TuningPlan {
  double start_hz = 7.3696e9;
  double speed_hz_per_hour = 4.75e3;
  /// Total frequency excursion; the ramp stops once it is covered.
  double span_hz = 0.4e6;

  double ramp_end_s() const;
  /// Rejects negative speed and speeds above the 12 kHz/h cap.
  void validate() const;
};

struct Block {
  double start_s = 0.0;
  double duration_s = 0.0;
  int label = 0;
  Phase phase = Phase::kOff;
  BlockKind kind = BlockKind::kWait;
  /// Global tuning-cycle index; -1 for calibration slots.
  std::int64_t cycle = -1;

  double end_s() const { return start_s + duration_s; }
};

struct ScheduleState {
  int label = 0;
  Phase phase = Phase::kOff;
  BlockKind kind = BlockKind::kWait;
  double nu_c_hz = 0.0;
  double delta_hz = 0.0;  ///< buffer detuning from the cavity, label * spacing
  std::size_t block_index = 0;
  std::int64_t cycle = -1;
};

class ProtocolSchedule {
 public:
  ProtocolSchedule() = default;
  ProtocolSchedule(ProtocolTiming timing, TuningPlan plan, std::size_t n_super_cycles);

  bool empty() const { return n_super_ == 0; }
  std::size_t size() const { return template_.size() * n_super_; }
  std::size_t super_cycles() const { return n_super_; }
  std::size_t blocks_per_super() const { return template_.size(); }
  std::size_t tuning_cycles() const { return n_super_ * static_cast<std::size_t>(timing_.cycles_per_super); }
  double period_s() const { return period_; }
  double duration_s() const { return period_ * static_cast<double>(n_super_); }

  Block block(std::size_t index) const;
  /// Half-open lookup: a time on a boundary belongs to the block that starts there.
  std::size_t index_at(double t) const;
  double nu_c(double t) const;
  double delta_hz(int label) const { return label * timing_.label_spacing_hz; }

  const ProtocolTiming& timing() const { return timing_; }
  const TuningPlan& plan() const { return plan_; }

  /// Knots (t, nu_c) of the piecewise-linear cavity frequency.
  std::vector<std::pair<double, double>> frequency_knots() const;

  template <typename Fn>
  void for_each_block(Fn&& fn) const {
    for (std::size_t s = 0; s < n_super_; ++s) {
      for (std::size_t i = 0; i < template_.size(); ++i) fn(materialize(s, i));
    }
  }

 private:
  Block materialize(std::size_t super, std::size_t i) const;

  ProtocolTiming timing_;
  TuningPlan plan_;
  std::size_t n_super_ = 0;
  double period_ = 0.0;
  std::vector<Block> template_;
  std::vector<double> starts_;
};

ProtocolSchedule build_schedule(const ProtocolTiming& timing, const TuningPlan& plan, std::size_t n_super_cycles);

/// Throws std::out_of_range for t outside [0, duration).
ScheduleState schedule_state(const ProtocolSchedule& schedule, double t);

enum class CalibrationTask { kHaloscopeFrequency, kSmpdRetune };

struct CalibrationSlot {
  double t_s = 0.0;
  double duration_s = 0.0;
  std::vector<CalibrationTask> tasks;
};

std::vector<CalibrationSlot> calibration_slots(const ProtocolSchedule& schedule);

struct ScheduleAudit {
  double wall_s = 0.0;
  double detect_off_s = 0.0;  ///< haloscope observation time, all labels
  double detect_on_s = 0.0;   ///< efficiency-probe time
  double label0_off_s = 0.0;
  double sideband_off_s = 0.0;
  double label0_detect_s = 0.0;    ///< both phases
  double sideband_detect_s = 0.0;  ///< both phases
  double dead_s = 0.0;
  std::size_t super_cycles = 0;

  double differential_duty() const { return detect_off_s > 0.0 ? label0_off_s / detect_off_s : 0.0; }
  double observation_fraction() const { return wall_s > 0.0 ? detect_off_s / wall_s : 0.0; }
  double dead_fraction() const { return wall_s > 0.0 ? dead_s / wall_s : 0.0; }
};

/// Time accounting over one super-cycle (the schedule is periodic). Dead time
/// is everything that is not signal-OFF detection.
ScheduleAudit audit_schedule(const ProtocolSchedule& schedule);

}  // namespace haloscope
