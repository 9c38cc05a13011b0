#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "haloscope/protocol.hpp"
#include "haloscope/smpd_sim.hpp"

using namespace haloscope;

namespace {

SmpdParams quiet_params() {
  SmpdParams p;
  p.drift_enabled = false;
  p.walk_enabled = false;
  return p;
}

struct Tally {
  double label0_off = 0.0;
  double sideband_off = 0.0;
  double on = 0.0;
};

Tally tally(const ClickStream& s) {
  Tally t;
  for (const ClickRecord& c : s.clicks) {
    if (c.phase == Phase::kOn) {
      t.on += 1.0;
    } else {
      (c.label == 0 ? t.label0_off : t.sideband_off) += 1.0;
    }
  }
  return t;
}

}  // namespace

TEST_CASE("rate model on and off resonance") {
  const SmpdParams p = quiet_params();
  TruthParams truth;
  ScheduleState st;
  st.nu_c_hz = 7.3696e9;
  const double thermal = 175e3 * 1.0186e-3;
  CHECK(instantaneous_rate(st, p, truth) == doctest::Approx(10.0 + 0.46 * thermal * 1.04).epsilon(1e-12));
  st.label = 1;
  st.delta_hz = 1e6;
  CHECK(instantaneous_rate(st, p, truth) == doctest::Approx(10.0 + 0.46 * thermal).epsilon(1e-12));
  st.phase = Phase::kOn;
  CHECK(instantaneous_rate(st, p, truth) == doctest::Approx(10.0 + 0.46 * (thermal + 1000.0)).epsilon(1e-12));

  // A cavity-locked signal passes the buffer Lorentzian.
  truth.signal_rate = 50.0;
  st.phase = Phase::kOff;
  const double acc = 1.0 / (1.0 + std::pow(2.0 * 1e6 / 0.7e6, 2));
  CHECK(instantaneous_rate(st, p, truth) == doctest::Approx(10.0 + 0.46 * (thermal + 50.0 * acc)).epsilon(1e-12));
}

TEST_CASE("dark-count rate sits near the measured 85 to 95 per second") {
  const SmpdParams p = quiet_params();
  ScheduleState st;
  st.label = 2;
  st.delta_hz = 2e6;
  const double rate = instantaneous_rate(st, p, TruthParams{});
  CHECK(rate > 85.0);
  CHECK(rate < 95.0);
}

TEST_CASE("a located signal is weighted by the cavity Lorentzian") {
  const SmpdParams p = quiet_params();
  TruthParams truth;
  truth.k_b_true = 0.0;
  truth.signal_rate = 100.0;
  truth.signal_frequency_hz = 7.3696e9;
  truth.cavity_linewidth_hz = 32.75e3;
  ScheduleState st;
  st.nu_c_hz = truth.signal_frequency_hz;
  const double base = instantaneous_rate(st, p, TruthParams{0.0, 0.0, 0.0, 0.0, 1});
  CHECK(instantaneous_rate(st, p, truth) - base == doctest::Approx(46.0).epsilon(1e-9));
  st.nu_c_hz += truth.cavity_linewidth_hz / 2.0;
  // Half the Lorentzian weight, times the buffer acceptance at that offset.
  const double buffer = 1.0 / (1.0 + std::pow(truth.cavity_linewidth_hz / p.kappa_b_hz, 2));
  CHECK(instantaneous_rate(st, p, truth) - base == doctest::Approx(23.0 * buffer).epsilon(1e-9));
}

TEST_CASE("buffer acceptance") {
  CHECK(buffer_acceptance(0.0, 0.7e6) == 1.0);
  CHECK(buffer_acceptance(0.35e6, 0.7e6) == doctest::Approx(0.5));
  CHECK(buffer_acceptance(-0.35e6, 0.7e6) == doctest::Approx(0.5));
  CHECK_THROWS_AS(buffer_acceptance(0.0, 0.0), std::invalid_argument);
}

TEST_CASE("efficiency drift stays inside its hard bound") {
  SmpdParams p;
  for (const double x : {-10.0, -0.3, 0.0, 0.05, 2.0, 50.0}) {
    const double eta = efficiency(p, NoiseState{x, 0.0});
    CHECK(std::abs(eta / p.eta0 - 1.0) <= p.drift.amplitude + 1e-15);
  }
  CHECK(efficiency(p, NoiseState{0.01, 0.0}) == doctest::Approx(p.eta0 * 1.01).epsilon(1e-4));
  p.drift_enabled = false;
  CHECK(efficiency(p, NoiseState{5.0, 0.0}) == p.eta0);
}

TEST_CASE("streams are deterministic in the seed") {
  const ProtocolSchedule s = build_schedule({}, {}, 1);
  TruthParams truth;
  truth.seed = 42;
  const ClickStream a = generate_click_stream(s, SmpdParams{}, truth);
  const ClickStream b = generate_click_stream(s, SmpdParams{}, truth);
  CHECK(a.clicks == b.clicks);
  truth.seed = 43;
  const ClickStream c = generate_click_stream(s, SmpdParams{}, truth);
  CHECK(a.clicks != c.clicks);
}

TEST_CASE("clicks fall only inside DETECT blocks with matching tags") {
  const ProtocolSchedule s = build_schedule({}, {}, 2);
  const ClickStream stream = generate_click_stream(s, SmpdParams{}, TruthParams{});
  REQUIRE(!stream.clicks.empty());
  double prev = -1.0;
  std::size_t bad = 0;
  for (const ClickRecord& c : stream.clicks) {
    const Block b = s.block(s.index_at(c.t));
    if (b.kind != BlockKind::kDetect || b.label != c.label || b.phase != c.phase) ++bad;
    if (c.t < prev) ++bad;
    prev = c.t;
  }
  CHECK(bad == 0);
  const ScheduleAudit a = audit_schedule(s);
  CHECK(stream.live_time_s == doctest::Approx(2.0 * (a.detect_off_s + a.detect_on_s)).epsilon(1e-9));
}

TEST_CASE("counts match the rate model within Poisson scatter") {
  const ProtocolSchedule s = build_schedule({}, {}, 2);
  const SmpdParams p = quiet_params();
  const ClickStream stream = generate_click_stream(s, p, TruthParams{});
  const ScheduleAudit a = audit_schedule(s);
  const Tally t = tally(stream);
  ScheduleState st;
  const double r0 = instantaneous_rate(st, p, TruthParams{});
  st.label = 1;
  const double rb = instantaneous_rate(st, p, TruthParams{});
  st.phase = Phase::kOn;
  const double ron = instantaneous_rate(st, p, TruthParams{});
  const auto within = [](double observed, double expected) {
    return std::abs(observed - expected) < 5.0 * std::sqrt(expected);
  };
  CHECK(within(t.label0_off, r0 * 2.0 * a.label0_off_s));
  CHECK(within(t.sideband_off, rb * 2.0 * a.sideband_off_s));
  CHECK(within(t.on, ron * 2.0 * a.detect_on_s));
}

TEST_CASE("window-level click counts match the experiment's tallies") {
  const ProtocolSchedule s = build_schedule({}, {}, 3);
  const ClickStream stream = generate_click_stream(s, SmpdParams{}, TruthParams{});
  const Tally t = tally(stream);
  const double windows = 30.0;
  const double on_res = t.label0_off / windows;
  const double per_sideband = t.sideband_off / windows / 4.0;
  CHECK(on_res >= 2700.0);
  CHECK(on_res <= 2900.0);
  CHECK(per_sideband >= 600.0);
  CHECK(per_sideband <= 700.0);
}

TEST_CASE("per-cycle readout reproduces the folded mean rate on the cycle grid") {
  const ProtocolSchedule s = build_schedule({}, {}, 1);
  SmpdParams folded = quiet_params();
  SmpdParams per_cycle = folded;
  per_cycle.readout_mode = ReadoutMode::kPerCycle;
  const Tally a = tally(generate_click_stream(s, folded, TruthParams{}));
  const ClickStream pc = generate_click_stream(s, per_cycle, TruthParams{});
  const Tally b = tally(pc);
  CHECK(std::abs(a.label0_off - b.label0_off) < 5.0 * std::sqrt(a.label0_off + b.label0_off));
  CHECK(std::abs(a.on - b.on) < 5.0 * std::sqrt(a.on + b.on));
  // Each click sits a fixed offset into its detection cycle.
  const double period = 99.075e-3 / 8001.0;
  std::size_t off_grid = 0;
  for (std::size_t i = 0; i < pc.clicks.size(); i += 97) {
    const ClickRecord& c = pc.clicks[i];
    if (c.phase != Phase::kOff) continue;
    const Block b = s.block(s.index_at(c.t));
    const double phase = std::fmod(c.t - b.start_s, period);
    if (std::abs(phase - 11.3e-6) > 1e-9) ++off_grid;
  }
  CHECK(off_grid == 0);
}

TEST_CASE("slow noise processes have their stationary spread") {
  ProtocolTiming timing;
  timing.repeats = 1;
  timing.settle_s = 0.0;
  timing.tuning_cycle_s = 16 * timing.pattern_entry_s() + 0.5;
  timing.calibration_s = 0.0;
  timing.cycles_per_super = 50;
  const ProtocolSchedule s = build_schedule(timing, {}, 40);
  SmpdParams p;
  p.protocol = timing;
  p.drift.correlation_s = 0.5;
  p.walk.reversion_s = 0.5;
  p.walk.diffusion = 8.0;
  double sum_d = 0.0, sum_d2 = 0.0, sum_w2 = 0.0;
  double n = 0.0;
  ClickGenerator gen(s, p, TruthParams{});
  gen.on_block([&](const Block& b, const NoiseState& noise) {
    if (b.phase != Phase::kOff || b.label != 0) return;
    sum_d += noise.drift;
    sum_d2 += noise.drift * noise.drift;
    sum_w2 += noise.walk * noise.walk;
    n += 1.0;
  });
  gen.run([](const ClickRecord&) {});
  CHECK(std::abs(sum_d / n) < 5.0 * 0.005 / std::sqrt(n / 10.0));
  CHECK(std::sqrt(sum_d2 / n) == doctest::Approx(0.005).epsilon(0.1));
  CHECK(std::sqrt(sum_w2 / n) == doctest::Approx(p.walk.stationary_std()).epsilon(0.1));
  CHECK(p.walk.stationary_std() == doctest::Approx(std::sqrt(8.0 * 0.5 / 2.0)));
}

TEST_CASE("parameter validation") {
  SmpdParams p;
  CHECK_NOTHROW(p.validate());
  p.protocol.off_block_cycles = 4000;  // 24.8 us mean cycle
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.eta0 = 0.95;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.readout.p1_given_e = 1.2;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  TruthParams t;
  t.signal_frequency_hz = 7e9;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

TEST_CASE("cycle timing report") {
  const CycleTimingReport r = cycle_timing(SmpdParams{});
  CHECK(r.measured_cycle_s == doctest::Approx(99.075e-3 / 8001.0));
  CHECK(r.measured_cycle_s > 12e-6);
  CHECK(r.measured_cycle_s < 18e-6);
  CHECK(r.model_cycle_s == doctest::Approx(12.3e-6).epsilon(0.01));
  CHECK(r.label0_off_per_super_s == doctest::Approx(285.35).epsilon(1e-3));
  CHECK(r.super_cycle_s == doctest::Approx(920.0));
  CHECK(r.dead_fraction == doctest::Approx(0.38).epsilon(0.02));
}

TEST_CASE("thermal occupancy can follow a line temperature") {
  SmpdParams p;
  p.line_temperature_k = 0.044;
  const double n = p.thermal_rate_coefficient(7.3696e9) / p.dnu_det_hz;
  const double x = 6.62607015e-34 * 7.3696e9 / (1.380649e-23 * 0.044);
  CHECK(n == doctest::Approx(1.0 / std::expm1(x)).epsilon(1e-12));
}
