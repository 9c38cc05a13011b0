// Acceptance checks, one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "haloscope/analysis.hpp"
#include "haloscope/axion_physics.hpp"
#include "haloscope/calibration.hpp"
#include "haloscope/cavity.hpp"
#include "haloscope/config.hpp"
#include "haloscope/constants.hpp"
#include "haloscope/log.hpp"
#include "haloscope/protocol.hpp"
#include "haloscope/smpd_sim.hpp"

using namespace haloscope;
namespace c = haloscope::constants;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

bool within(double value, double target, double rel) { return std::abs(value - target) <= rel * std::abs(target); }

std::string fmt(const char* pattern, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

// ---------------------------------------------------------------- 1

HaloscopeConfig table_case(double nu_hz, double b_tesla, double g_gamma) {
  HaloscopeConfig h = HaloscopeConfig::paper_preset();
  h.nu_c_hz = nu_hz;
  h.b0_tesla = b_tesla;
  h.g_gamma = g_gamma;
  h.beta = 1.0;
  h.q0 = 4.5e5;
  h.antenna_fraction = false;
  // Same cavity length: the cross-section scales as 1/nu^2.
  h.volume_liters = 0.1 * std::pow(7.37e9 / nu_hz, 2);
  return h;
}

Outcome benchmark_table() {
  struct Row {
    double nu, b, g, power_yw, rate;
  };
  const Row rows[] = {
      {7.37e9, 2.0, c::g_gamma_ksvz, 0.84, 0.17}, {7.37e9, 2.0, c::g_gamma_dfsz, 0.11, 0.026},
      {7.37e9, 12.0, c::g_gamma_ksvz, 30.4, 6.2}, {7.37e9, 12.0, c::g_gamma_dfsz, 6.3, 0.86},
      {10e9, 12.0, c::g_gamma_ksvz, 22.39, 3.38}, {10e9, 12.0, c::g_gamma_dfsz, 3.11, 0.47},
  };
  Outcome o{true, ""};
  std::ostringstream d;
  for (const Row& r : rows) {
    const HaloscopeConfig h = table_case(r.nu, r.b, r.g);
    const double p = axion_signal_power(h) / c::yoctowatt;
    const double n = signal_photon_rate(h);
    const bool ok = within(p, r.power_yw, 0.05) && within(n, r.rate, 0.05);
    o.pass = o.pass && ok;
    if (!ok) d << fmt("%.3g GHz ", r.nu / 1e9) << fmt("%g T ", r.b) << fmt("g=%g: ", r.g) << fmt("%.3g yW", p)
               << fmt(" (want %g)", r.power_yw) << fmt(" %.3g/s", n) << fmt(" (want %g); ", r.rate);
  }
  const double b_ratio = axion_signal_power(table_case(7.37e9, 12.0, -0.97)) / axion_signal_power(table_case(7.37e9, 2.0, -0.97));
  const double m_ratio = axion_signal_power(table_case(7.37e9, 2.0, -0.97)) / axion_signal_power(table_case(7.37e9, 2.0, 0.36));
  const double m_target = std::pow(0.97 / 0.36, 2);
  o.pass = o.pass && std::abs(b_ratio - 36.0) <= 0.5 && within(m_ratio, m_target, 0.03);
  d << fmt("12T/2T %.3f", b_ratio) << fmt(", KSVZ/DFSZ %.3f", m_ratio) << fmt(" (want %.3f)", m_target);
  o.detail = d.str();
  return o;
}

// ---------------------------------------------------------------- 2

Outcome thermal() {
  const double n = thermal_occupation(7.3e9, 0.020);
  return {within(n, 2.4e-8, 0.05), fmt("n_th(7.3 GHz, 20 mK) = %.3e", n)};
}

// ---------------------------------------------------------------- 3

Outcome advantage() {
  DetectorFigures det = DetectorFigures::paper_preset();
  det.eta = 0.46;
  det.dnu_a_hz = 7.3e3;
  det.gamma_dc = 85.0;
  const double r1 = speedup(det, 32.75e3).r;
  det.eta = 0.8;
  det.gamma_dc = 10.0;
  det.gamma_int = 10.0;
  det.dnu_a_hz = 7.3e9 / 1e6;
  const double r2 = speedup(det, 32.75e3).r;
  return {std::abs(r1 - 18.2) <= 0.2 && r2 >= 430.0 && r2 <= 500.0,
          fmt("R = %.2f", r1) + fmt(", ideal detector R = %.1f", r2)};
}

// ---------------------------------------------------------------- 4

double chi2_1_cdf(double x) { return x <= 0.0 ? 0.0 : std::erf(std::sqrt(x / 2.0)); }

// Asymptotic Kolmogorov distribution with the small-sample correction.
double ks_p_value(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0.0;
  for (int j = 1; j <= 100; ++j) {
    p += 2.0 * ((j % 2) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
  }
  return std::clamp(p, 0.0, 1.0);
}

Outcome wilks() {
  const double k_b = 0.05;
  const double mu_b = 1e4;
  std::mt19937_64 rng(20240601);
  std::poisson_distribution<long> nb_dist(mu_b);
  std::poisson_distribution<long> nc_dist((1.0 + k_b) * mu_b);
  std::vector<double> s2;
  s2.reserve(10000);
  for (int i = 0; i < 10000; ++i) {
    const double nc = static_cast<double>(nc_dist(rng));
    const double nb = static_cast<double>(nb_dist(rng));
    const double s = significance(nc, nb, k_b).s;
    s2.push_back(s * s);
  }
  std::sort(s2.begin(), s2.end());
  double d = 0.0;
  const double n = static_cast<double>(s2.size());
  for (std::size_t i = 0; i < s2.size(); ++i) {
    const double f = chi2_1_cdf(s2[i]);
    d = std::max({d, std::abs(static_cast<double>(i + 1) / n - f), std::abs(f - static_cast<double>(i) / n)});
  }
  const double p = ks_p_value(d, s2.size());
  double identity = 0.0;
  for (const double nb : {1e2, 1e3, 1e4, 12345.678, 1e6}) {
    identity = std::max(identity, significance((1.0 + k_b) * nb, nb, k_b).s);
  }
  return {p > 0.01 && identity <= 1e-12, fmt("KS D = %.4f", d) + fmt(", p = %.3f", p) + fmt(", max S at null = %.1e", identity)};
}

// ---------------------------------------------------------------- 5

Subinterval first_group(const std::vector<CountWindow>& windows, double* live_s) {
  const Subinterval sub = select_subinterval(windows);
  *live_s = 0.0;
  for (std::size_t i = sub.first; i < sub.first + sub.count; ++i) *live_s += windows[i].duration_s;
  return sub;
}

std::vector<CountWindow> simulate_windows(const ProtocolSchedule& schedule, const SmpdParams& smpd,
                                          const TruthParams& truth) {
  WindowBinner binner(schedule);
  ClickGenerator gen(schedule, smpd, truth);
  gen.run([&](const ClickRecord& click) { binner.add(click); });
  return binner.windows();
}

Outcome coverage() {
  const RunConfig cfg = RunConfig::paper2024();
  const ProtocolSchedule schedule = build_schedule(cfg.smpd.protocol, cfg.tuning, 1);
  const double nu = cfg.haloscope.nu_c_hz;
  const double k_b = cfg.analysis.exclusion.k_b;
  const double z = cfg.analysis.exclusion.z_limit;

  // Background level of one 10-minute group from independent pilot runs.
  double mu_b = 0.0;
  double live = 0.0;
  const int pilots = 50;
  for (int i = 0; i < pilots; ++i) {
    TruthParams truth = cfg.truth;
    truth.seed = 900000 + static_cast<std::uint64_t>(i);
    double t = 0.0;
    mu_b += static_cast<double>(first_group(simulate_windows(schedule, cfg.smpd, truth), &t).n_b) / pilots;
    live += t / pilots;
  }
  const double s95 = upper_limit_counts(mu_b, k_b, z).n95_continuous - mu_b;
  const double rate = s95 / (cfg.smpd.eta0 * live);
  const double injected_w = rate * c::planck * nu;

  const int trials = 1000;
  int covered = 0;
  double sum = 0.0;
  double sum2 = 0.0;
  for (int i = 0; i < trials; ++i) {
    TruthParams truth = cfg.truth;
    truth.seed = 1 + static_cast<std::uint64_t>(i);
    truth.signal_rate = rate;
    double t = 0.0;
    const Subinterval sub = first_group(simulate_windows(schedule, cfg.smpd, truth), &t);
    const CountLimit lim = upper_limit_counts(static_cast<double>(sub.n_b), k_b, z);
    const double p95 = limit_power(static_cast<double>(lim.n95), static_cast<double>(sub.n_b), cfg.smpd.eta0, nu, t);
    if (p95 >= injected_w) ++covered;
    const double excess = static_cast<double>(lim.n95 - sub.n_b);
    sum += excess;
    sum2 += excess * excess;
  }
  const double frac = static_cast<double>(covered) / trials;
  const double mean = sum / trials;
  const double sd = std::sqrt(std::max(sum2 / trials - mean * mean, 0.0));
  return {frac >= 0.93, fmt("coverage %.3f", frac) + fmt(" with %.0f injected counts", s95) +
                            fmt(" over %.1f s", live) + fmt(" (signal %.2f photons/s);", rate) +
                            fmt(" trial limits %.1f", mean) + fmt(" +- %.1f counts", sd)};
}

// ---------------------------------------------------------------- 6, 9

struct ScanRun {
  std::vector<CountWindow> windows;
  double seconds = 0.0;
};

double window_time(const std::vector<CountWindow>& w) {
  std::vector<double> d;
  for (const CountWindow& x : w) d.push_back(x.duration_s);
  std::nth_element(d.begin(), d.begin() + static_cast<long>(d.size() / 2), d.end());
  return d[d.size() / 2];
}

std::vector<AllanPoint> allan_of(const std::vector<CountWindow>& w, AllanSeries which, const std::vector<int>& ms) {
  const double base = window_time(w);
  std::vector<double> taus;
  for (const int m : ms) taus.push_back(m * base);
  return allan_variance(window_rates(w, which), base, taus);
}

double loglog_slope(const std::vector<AllanPoint>& pts) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(pts.size());
  for (const AllanPoint& p : pts) {
    const double x = std::log(p.tau_s);
    const double y = std::log(p.variance);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Outcome allan(const ScanRun& walk_run) {
  RunConfig cfg = RunConfig::paper2024();
  cfg.smpd.walk_enabled = false;
  cfg.smpd.drift_enabled = false;
  const ProtocolSchedule schedule = build_schedule(cfg.smpd.protocol, cfg.tuning, 400);
  const auto stationary = simulate_windows(schedule, cfg.smpd, cfg.seeded_truth());
  const double base = window_time(stationary);
  // Averaging times from 30 s to 10 min in units of the window time.
  std::vector<int> ms;
  for (int m = 1; m * base <= 600.0 + 1e-9; ++m) {
    if (m * base >= 30.0) ms.push_back(m);
  }
  const double slope_c = loglog_slope(allan_of(stationary, AllanSeries::kCavity, ms));
  const double slope_b = loglog_slope(allan_of(stationary, AllanSeries::kSideband, ms));
  const bool slopes_ok = std::abs(slope_c + 1.0) <= 0.1 && std::abs(slope_b + 1.0) <= 0.1;

  const std::vector<int> powers{1, 2, 4, 8, 16, 32, 64};
  const double min_c = allan_minimum_tau(allan_of(walk_run.windows, AllanSeries::kCavity, powers));
  const double min_b = allan_minimum_tau(allan_of(walk_run.windows, AllanSeries::kSideband, powers));
  const bool minima_ok = min_c >= 300.0 && min_c <= 2400.0 && min_b >= 300.0 && min_b <= 2400.0;

  const auto diff = allan_of(walk_run.windows, AllanSeries::kDifference, powers);
  double reach = 0.0;
  for (const AllanPoint& p : diff) {
    const double line = diff.front().variance * diff.front().tau_s / p.tau_s;
    const double ratio = p.variance / line;
    if (ratio > 2.0 || ratio < 0.5) break;
    reach = p.tau_s;
  }
  const bool diff_ok = reach >= 1800.0;
  return {slopes_ok && minima_ok && diff_ok,
          fmt("stationary slopes %.3f", slope_c) + fmt(" / %.3f", slope_b) + fmt("; walk minima %.0f s", min_c) +
              fmt(" / %.0f s", min_b) + fmt("; difference on 1/tau to %.0f s", reach)};
}

ScanRun desk_scan() {
  const RunConfig cfg = RunConfig::paper2024();
  const ProtocolSchedule schedule = build_schedule(cfg.smpd.protocol, cfg.tuning, cfg.resolved_super_cycles());
  return {simulate_windows(schedule, cfg.smpd, cfg.seeded_truth()), schedule.duration_s()};
}

Outcome exclusion(const ScanRun& run) {
  const RunConfig cfg = RunConfig::paper2024();
  const ExclusionResult r = exclusion_curve(run.windows, cfg.haloscope, cfg.detector, cfg.analysis.exclusion);
  double lo = INFINITY;
  double hi = 0.0;
  int discoveries = 0;
  for (const ExclusionPoint& p : r.points) {
    lo = std::min(lo, p.g_limit);
    hi = std::max(hi, p.g_limit);
    discoveries += p.discovery ? 1 : 0;
  }
  const bool g_ok = !r.points.empty() && lo >= 7e-14 / 1.5 && hi <= 7e-14 * 1.5;
  const bool speed_ok = within(r.scan_speed_mhz_per_day, 4.3, 0.15);
  return {g_ok && speed_ok, fmt("%.0f linewidth points", static_cast<double>(r.points.size())) +
                                fmt(", g limits %.3e", lo) + fmt(" to %.3e GeV^-1", hi) +
                                fmt(", scan speed %.3f MHz/day", r.scan_speed_mhz_per_day) +
                                fmt(", %.0f discoveries", discoveries) +
                                fmt(" (%.1f h simulated)", run.seconds / 3600.0)};
}

// ---------------------------------------------------------------- 7

Outcome calibration_round_trip() {
  const DispersiveParams truth;
  int good = 0;
  for (int i = 0; i < 100; ++i) {
    const auto obs = synthetic_observations(truth, 41, 8e6, 60.0, 1000 + static_cast<std::uint64_t>(i));
    try {
      const DispersiveFit f = fit_dispersive(obs, truth);
      if (std::abs(f.params.kappa_hz - truth.kappa_hz) <= 3.0 * f.kappa_sigma() &&
          std::abs(f.params.chi_hz - truth.chi_hz) <= 3.0 * f.chi_sigma() &&
          std::abs(f.params.epsilon_hz - truth.epsilon_hz) <= 3.0 * f.epsilon_sigma()) {
        ++good;
      }
    } catch (const FitError&) {
    }
  }
  const InputFlux flux = input_photon_flux(truth);
  const Measured eta = operational_efficiency({9233.0, 30.0}, {flux.flux.value, 340.0});
  const bool ok = good >= 95 && std::abs(flux.flux.value - 20050.0) <= 340.0 && std::abs(eta.value - 0.460) <= 0.009;
  return {ok, fmt("%.0f/100 fits within 3 sigma", good) + fmt(", flux %.0f/s", flux.flux.value) +
                  fmt(", eta %.4f", eta.value) + fmt(" +- %.4f", eta.sigma)};
}

// ---------------------------------------------------------------- 8

Outcome beta_choice() {
  const double ql = 2.25e5;
  const CavityMode over = CavityMode::from_loaded(7.3696e9, ql, 3.15);
  const CavityMode under = CavityMode::from_loaded(7.3696e9, ql, 0.317);
  const PulseDrive drive = PulseDrive::square(1.0, 20e-6);
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(120, 0.0, 40e-6);
  const Eigen::VectorXd clean = pulse_response(over, drive, t);
  std::mt19937_64 rng(315);
  std::normal_distribution<double> noise(0.0, 0.01);
  PulseTrace trace{t, clean, Eigen::VectorXd::Constant(t.size(), 0.01)};
  for (Eigen::Index i = 0; i < t.size(); ++i) trace.power(i) = 3.0 * clean(i) + 0.2 + noise(rng);
  const BetaChoice choice = disambiguate_beta(trace, drive, over, under);
  return {choice.outcome == Coupling::kOvercoupled && choice.residual_ratio >= 5.0,
          std::string(choice.outcome == Coupling::kOvercoupled ? "overcoupled" : "not overcoupled") +
              fmt(", residual ratio %.1f", choice.residual_ratio)};
}

// ---------------------------------------------------------------- 10

Outcome accounting() {
  const RunConfig cfg = RunConfig::paper2024();
  const ScheduleAudit a = audit_schedule(build_schedule(cfg.smpd.protocol, cfg.tuning, 1));
  const bool ok = within(a.label0_off_s, 285.0, 0.02) && within(a.differential_duty(), 0.5, 0.02) &&
                  within(a.wall_s, 920.0, 0.02) && within(a.dead_fraction(), 0.38, 0.02);
  return {ok, fmt("label-0 %.2f s", a.label0_off_s) + fmt(", duty %.3f", a.differential_duty()) +
                  fmt(", super-cycle %.1f s", a.wall_s) + fmt(", dead %.3f", a.dead_fraction())};
}

}  // namespace

int main() {
  log::set_level(log::Level::kQuiet);
  int failures = 0;
  ScanRun scan;
  const auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), dt);
    std::fflush(stdout);
  };

  report(1, "benchmark signal table", benchmark_table);
  report(2, "thermal occupancy", thermal);
  report(3, "counting advantage", advantage);
  report(4, "likelihood-ratio null distribution", wilks);
  report(5, "limit coverage", coverage);
  // Criteria 6 and 9 share one full-span background scan.
  const auto shared_scan = [&]() -> const ScanRun& {
    if (scan.windows.empty()) scan = desk_scan();
    return scan;
  };
  report(6, "Allan variance", [&] { return allan(shared_scan()); });
  report(7, "calibration round trip", calibration_round_trip);
  report(8, "coupling disambiguation", beta_choice);
  report(9, "desk-scale exclusion scan", [&] { return exclusion(shared_scan()); });
  report(10, "protocol accounting", accounting);
  return failures;
}
