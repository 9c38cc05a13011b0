#include "haloscope/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "haloscope/analysis.hpp"
#include "haloscope/axion_physics.hpp"
#include "haloscope/calibration.hpp"
#include "haloscope/cavity.hpp"
#include "haloscope/config.hpp"
#include "haloscope/io.hpp"
#include "haloscope/least_squares.hpp"
#include "haloscope/protocol.hpp"
#include "haloscope/smpd_sim.hpp"

namespace haloscope {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr double kSecondsPerDay = 86400.0;

// Failure carrying its exit code up to run_cli.
struct CliFailure {
  int code;
  std::string message;
};

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string preset = "paper2024";
};

RunConfig resolve_config(const CommonOptions& opt) {
  if (opt.preset != "paper2024") throw CliFailure{kExitConfig, "unknown preset '" + opt.preset + "'"};
  RunConfig cfg = RunConfig::paper2024();
  try {
    if (!opt.config_path.empty()) cfg = load_config(opt.config_path, cfg);
  } catch (const ConfigError& e) {
    throw CliFailure{kExitConfig, e.what()};
  }
  if (opt.seed) cfg.seed = *opt.seed;
  return cfg;
}

std::string require_out_dir(const CommonOptions& opt, bool required) {
  if (opt.out_dir.empty()) {
    if (required) throw CliFailure{kExitConfig, "--out is required"};
    return {};
  }
  std::error_code ec;
  if (!fs::is_directory(opt.out_dir, ec)) {
    throw CliFailure{kExitConfig, "output directory does not exist: " + opt.out_dir};
  }
  return opt.out_dir;
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_json(const std::string& path, const json& doc) {
  AtomicFile file(path);
  file.stream() << doc.dump(2) << '\n';
  file.commit();
}

std::string format_double(double v, const char* fmt = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

ProtocolSchedule schedule_for(const RunConfig& cfg) {
  return build_schedule(cfg.smpd.protocol, cfg.tuning, cfg.resolved_super_cycles());
}

double median_duration(const std::vector<CountWindow>& windows) {
  std::vector<double> d;
  d.reserve(windows.size());
  for (const CountWindow& w : windows) d.push_back(w.duration_s);
  if (d.empty()) return 0.0;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return d[d.size() / 2];
}

std::vector<double> default_taus(double base, std::size_t n) {
  std::vector<double> taus;
  for (std::size_t m = 1; n / m >= 3; m *= 2) taus.push_back(base * static_cast<double>(m));
  return taus;
}

// The requested averaging times rounded onto the window grid.
std::vector<double> snap_taus(const std::vector<double>& requested, double base, std::size_t n) {
  std::vector<double> taus;
  for (const double t : requested) {
    const auto m = static_cast<std::size_t>(std::max(1.0, std::round(t / base)));
    const double snapped = base * static_cast<double>(m);
    if (n / m >= 3 && std::find(taus.begin(), taus.end(), snapped) == taus.end()) taus.push_back(snapped);
  }
  return taus;
}

const char* series_name(AllanSeries s) {
  switch (s) {
    case AllanSeries::kCavity: return "cavity";
    case AllanSeries::kSideband: return "sideband";
    case AllanSeries::kDifference: return "difference";
  }
  return "?";
}

json allan_table(const std::vector<CountWindow>& windows, const std::vector<double>& requested) {
  json table = json::object();
  const double base = median_duration(windows);
  if (windows.size() < 3 || !(base > 0.0)) return table;
  const std::vector<double> taus =
      requested.empty() ? default_taus(base, windows.size()) : snap_taus(requested, base, windows.size());
  table["base_tau_s"] = base;
  for (const AllanSeries s : {AllanSeries::kCavity, AllanSeries::kSideband, AllanSeries::kDifference}) {
    const std::vector<AllanPoint> points = allan_variance(window_rates(windows, s), base, taus);
    json rows = json::array();
    for (const AllanPoint& p : points) rows.push_back({{"tau_s", p.tau_s}, {"variance", p.variance}, {"bins", p.bins}});
    json entry;
    entry["points"] = rows;
    const double t_min = points.size() >= 3 ? allan_minimum_tau(points) : std::numeric_limits<double>::infinity();
    entry["minimum_tau_s"] = std::isfinite(t_min) ? json(t_min) : json(nullptr);
    table[series_name(s)] = entry;
  }
  return table;
}

void print_allan(const json& table, std::ostream& out) {
  for (const char* name : {"cavity", "sideband", "difference"}) {
    if (!table.contains(name)) continue;
    out << "allan " << name << '\n';
    for (const auto& row : table[name]["points"]) {
      out << "  tau_s " << format_double(row["tau_s"].get<double>()) << " variance "
          << format_double(row["variance"].get<double>()) << " bins " << row["bins"].get<std::size_t>() << '\n';
    }
    const auto& m = table[name]["minimum_tau_s"];
    out << "  minimum_tau_s " << (m.is_null() ? std::string("none") : format_double(m.get<double>())) << '\n';
  }
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const CommonOptions& opt, std::ostream& out) {
  const RunConfig cfg = resolve_config(opt);
  const std::string dir = require_out_dir(opt, true);
  const ProtocolSchedule schedule = schedule_for(cfg);
  const Provenance prov{cfg.digest(), cfg.seed};
  const bool binary = cfg.stream_format == StreamFormat::kBinary;

  StreamWriter writer(join(dir, binary ? "stream.bin" : "stream.txt"), {prov, schedule.duration_s(), binary});
  ClickGenerator generator(schedule, cfg.smpd, cfg.seeded_truth());
  const double live = generator.run([&](const ClickRecord& c) { writer.write(c); });
  writer.commit();
  write_schedule(join(dir, "schedule.txt"), schedule, prov);
  {
    AtomicFile file(join(dir, "config.json"));
    file.stream() << dump_config(cfg) << '\n';
    file.commit();
  }

  const ScheduleAudit audit = audit_schedule(schedule);
  const auto n_super = static_cast<double>(schedule.super_cycles());
  out << "simulate: clicks " << writer.count() << " live_time_s " << format_double(live, "%.3f")
      << " label0_off_s " << format_double(audit.label0_off_s * n_super, "%.3f") << " duration_s "
      << format_double(schedule.duration_s(), "%.3f") << " super_cycles " << schedule.super_cycles() << " digest "
      << digest_hex(prov.digest) << " seed " << prov.seed << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------- analyze

struct AnalyzeOptions {
  std::string stream_path;
  std::string schedule_path;
};

std::string default_stream(const std::string& dir) {
  const std::string bin = join(dir, "stream.bin");
  if (fs::exists(bin) && !fs::exists(join(dir, "stream.txt"))) return bin;
  return join(dir, "stream.txt");
}

int cmd_analyze(const CommonOptions& opt, const AnalyzeOptions& aopt, std::ostream& out) {
  const RunConfig cfg = resolve_config(opt);
  const std::string dir = require_out_dir(opt, true);
  const std::string stream_path = aopt.stream_path.empty() ? default_stream(dir) : aopt.stream_path;
  const std::string schedule_path = aopt.schedule_path.empty() ? join(dir, "schedule.txt") : aopt.schedule_path;
  for (const std::string& p : {stream_path, schedule_path}) {
    if (!fs::is_regular_file(p)) throw CliFailure{kExitConfig, "cannot read input file " + p};
  }

  const ProtocolSchedule schedule = schedule_for(cfg);
  const Provenance expected{cfg.digest(), cfg.seed};
  Provenance schedule_prov;
  const std::string mismatch = verify_schedule(schedule_path, schedule, &schedule_prov);
  if (schedule_prov.digest != expected.digest || schedule_prov.seed != expected.seed) {
    throw CliFailure{kExitProvenance, "digest mismatch: schedule " + digest_hex(schedule_prov.digest) + " seed " +
                                          std::to_string(schedule_prov.seed) + ", config " +
                                          digest_hex(expected.digest) + " seed " + std::to_string(expected.seed)};
  }
  if (!mismatch.empty()) throw CliFailure{kExitProvenance, "schedule mismatch: " + mismatch};

  WindowBinner binner(schedule);
  StreamHeader header;
  try {
    header = read_stream(stream_path, [&](const ClickRecord& c) { binner.add(c); });
  } catch (const std::invalid_argument& e) {
    throw CliFailure{kExitProvenance, e.what()};
  }
  if (header.provenance.digest != expected.digest || header.provenance.seed != expected.seed) {
    throw CliFailure{kExitProvenance, "digest mismatch: stream " + digest_hex(header.provenance.digest) + " seed " +
                                          std::to_string(header.provenance.seed) + ", config " +
                                          digest_hex(expected.digest) + " seed " + std::to_string(expected.seed)};
  }
  if (binner.total_clicks() == 0) throw CliFailure{kExitEmpty, "no detect-phase clicks"};

  const std::vector<CountWindow>& windows = binner.windows();
  BiasEstimate bias;
  try {
    bias = estimate_bias(windows);
  } catch (const std::domain_error&) {
    throw CliFailure{kExitEmpty, "no sideband clicks"};
  }
  ExclusionOptions ex = cfg.analysis.exclusion;
  if (cfg.analysis.bias_policy == BiasPolicy::kEstimated) ex.k_b = bias.k_b;
  const ExclusionResult result = exclusion_curve(windows, cfg.haloscope, cfg.detector, ex);
  if (result.points.empty()) throw CliFailure{kExitEmpty, "no complete analysis interval"};

  write_exclusion(join(dir, "exclusion.txt"), result, expected);
  write_windows(join(dir, "windows.txt"), windows, expected);

  std::size_t discoveries = 0;
  double max_s = 0.0;
  double g_min = std::numeric_limits<double>::infinity();
  double g_max = 0.0;
  for (const ExclusionPoint& p : result.points) {
    if (p.discovery) ++discoveries;
    max_s = std::max(max_s, p.max_s);
    g_min = std::min(g_min, p.g_limit);
    g_max = std::max(g_max, p.g_limit);
  }

  json summary;
  summary["digest"] = digest_hex(expected.digest);
  summary["seed"] = expected.seed;
  summary["clicks"] = binner.total_clicks();
  summary["windows"] = windows.size();
  summary["bias"] = {{"k_b_estimate", bias.k_b}, {"sigma", bias.sigma}, {"k_b_used", ex.k_b},
                     {"policy", cfg.analysis.bias_policy == BiasPolicy::kFixed ? "fixed" : "estimated"}};
  summary["scan_speed_mhz_per_day"] = result.scan_speed_mhz_per_day;
  summary["linewidth_hz"] = result.linewidth_hz;
  summary["points"] = result.points.size();
  summary["discoveries"] = discoveries;
  summary["max_significance"] = max_s;
  summary["g_limit_min_gev_inv"] = g_min;
  summary["g_limit_max_gev_inv"] = g_max;
  summary["confidence"] = ex.confidence;
  summary["allan"] = allan_table(windows, cfg.analysis.allan_taus_s);
  write_json(join(dir, "summary.json"), summary);

  out << "analyze: clicks " << binner.total_clicks() << " windows " << windows.size() << " points "
      << result.points.size() << " k_b " << format_double(bias.k_b, "%.4f") << " +- "
      << format_double(bias.sigma, "%.4f") << " scan_MHz_per_day "
      << format_double(result.scan_speed_mhz_per_day, "%.3f") << " g_limit_GeVinv " << format_double(g_min, "%.3e")
      << ".." << format_double(g_max, "%.3e") << " discoveries " << discoveries << " max_S "
      << format_double(max_s, "%.2f") << '\n';
  return kExitOk;
}

// -------------------------------------------------------------------- plan

int cmd_plan(const CommonOptions& opt, std::ostream& out) {
  const RunConfig cfg = resolve_config(opt);
  const std::string dir = require_out_dir(opt, false);
  const HaloscopeConfig& h = cfg.haloscope;
  const DetectorFigures& det = cfg.detector;

  json doc;
  doc["span_hz"] = cfg.plan.span_hz;
  if (!(cfg.plan.span_hz > 0.0)) {
    doc["empty"] = true;
    if (!dir.empty()) write_json(join(dir, "plan.json"), doc);
    out << "plan: empty\n";
    return kExitOk;
  }

  HaloscopeConfig reference = h;
  reference.b0_tesla = 2.0;
  const double power = axion_signal_power(h);
  const double linewidth = h.cavity_linewidth_hz();
  const Speedup gain = speedup(det, linewidth);
  const double t_counter = measurement_time(Detection::kCounter, power, h.nu_c_hz, cfg.plan.snr_target, det);
  const double t_sql = measurement_time(Detection::kSql, power, h.nu_c_hz, cfg.plan.snr_target, det);
  const double counter_speed = linewidth / t_counter * kSecondsPerDay / 1e6;
  const double sql_speed = linewidth / t_sql * kSecondsPerDay / 1e6;
  const double days = cfg.plan.span_hz / 1e6 / counter_speed;

  doc["signal_power_w"] = power;
  doc["photon_rate_per_s"] = signal_photon_rate(h);
  doc["power_ratio_vs_2t"] = power / axion_signal_power(reference);
  doc["g_agg_gev_inv"] = axion_photon_coupling(h);
  doc["cavity_linewidth_hz"] = linewidth;
  doc["speedup"] = gain.r;
  doc["speedup_thermal"] = gain.r_thermal;
  doc["t_counter_s"] = t_counter;
  doc["t_sql_s"] = t_sql;
  doc["time_ratio"] = t_counter / t_sql;
  doc["counter_mhz_per_day"] = counter_speed;
  doc["sql_mhz_per_day"] = sql_speed;
  doc["days_to_cover"] = days;
  if (!dir.empty()) write_json(join(dir, "plan.json"), doc);

  out << "plan: P_a_W " << format_double(power, "%.4e") << " photons_per_s " << format_double(signal_photon_rate(h))
      << " power_ratio_vs_2T " << format_double(power / axion_signal_power(reference), "%.3f") << " R "
      << format_double(gain.r, "%.2f") << " t_counter_over_t_sql " << format_double(t_counter / t_sql, "%.4f")
      << " counter_MHz_per_day " << format_double(counter_speed, "%.4g") << " sql_MHz_per_day "
      << format_double(sql_speed, "%.4g") << " days_to_cover " << format_double(days, "%.4g") << '\n';
  return kExitOk;
}

// --------------------------------------------------------------- calibrate

struct CalibrateOptions {
  std::string observations;
  std::string spectroscopy;
};

int cmd_calibrate(const CommonOptions& opt, const CalibrateOptions& copt, std::ostream& out) {
  const RunConfig cfg = resolve_config(opt);
  const std::string dir = require_out_dir(opt, false);
  const CalibrationInputs& in = cfg.calibration;

  std::vector<RamseyObservation> obs;
  if (copt.observations.empty()) {
    obs = synthetic_observations(in.dispersive, in.synthetic_points, in.synthetic_span_hz, in.synthetic_noise_hz,
                                 cfg.seed);
  } else {
    obs = read_observations(copt.observations);
  }
  if (obs.empty()) throw CliFailure{kExitEmpty, "no observations"};

  json doc;
  try {
    const DispersiveFit fit = fit_dispersive(obs, in.dispersive);
    const InputFlux flux = input_photon_flux(fit.params, fit.covariance);
    const Measured eta = operational_efficiency(in.excess_rate, flux.flux);
    doc["source"] = copt.observations.empty() ? "synthetic" : copt.observations;
    doc["kappa_hz"] = {fit.params.kappa_hz, fit.kappa_sigma()};
    doc["chi_hz"] = {fit.params.chi_hz, fit.chi_sigma()};
    doc["epsilon_hz"] = {fit.params.epsilon_hz, fit.epsilon_sigma()};
    json cov = json::array();
    for (int i = 0; i < 3; ++i) cov.push_back({fit.covariance(i, 0), fit.covariance(i, 1), fit.covariance(i, 2)});
    doc["covariance_hz2"] = cov;
    doc["chi2"] = fit.chi2;
    doc["dof"] = fit.dof;
    doc["flux_per_s"] = {flux.flux.value, flux.flux.sigma};
    doc["power_w"] = {flux.power.value, flux.power.sigma};
    doc["efficiency"] = {eta.value, eta.sigma};
    out << "calibrate: kappa_Hz " << format_double(fit.params.kappa_hz) << " +- " << format_double(fit.kappa_sigma())
        << " chi_Hz " << format_double(fit.params.chi_hz) << " +- " << format_double(fit.chi_sigma()) << " epsilon_Hz "
        << format_double(fit.params.epsilon_hz) << " +- " << format_double(fit.epsilon_sigma()) << " chi2/dof "
        << format_double(fit.chi2) << "/" << fit.dof << " flux_per_s " << format_double(flux.flux.value, "%.0f")
        << " +- " << format_double(flux.flux.sigma, "%.0f") << " eta " << format_double(eta.value, "%.3f") << " +- "
        << format_double(eta.sigma, "%.3f") << '\n';

    if (!copt.spectroscopy.empty()) {
      std::vector<double> f;
      std::vector<double> counts;
      read_spectroscopy(copt.spectroscopy, f, counts);
      const SpectroscopyFit s = fit_cavity_spectroscopy(Eigen::Map<const Eigen::VectorXd>(f.data(), std::ssize(f)),
                                                        Eigen::Map<const Eigen::VectorXd>(counts.data(), std::ssize(counts)));
      doc["spectroscopy"] = {{"nu_c_hz", {s.nu_c_hz, s.nu_c_sigma_hz}},
                             {"linewidth_hz", {s.linewidth_hz, s.linewidth_sigma_hz}},
                             {"depth", {s.depth, s.depth_sigma}},
                             {"q_loaded", s.q_loaded},
                             {"beta_over", s.beta_over},
                             {"beta_under", s.beta_under},
                             {"q0_over", {s.q0_over, s.q0_over_sigma}},
                             {"q0_under", {s.q0_under, s.q0_under_sigma}},
                             {"chi2", s.chi2},
                             {"dof", s.dof}};
      out << "spectroscopy: nu_c_Hz " << format_double(s.nu_c_hz, "%.6f") << " +- "
          << format_double(s.nu_c_sigma_hz) << " linewidth_Hz " << format_double(s.linewidth_hz) << " +- "
          << format_double(s.linewidth_sigma_hz) << " Q_L " << format_double(s.q_loaded) << " beta "
          << format_double(s.beta_over, "%.3f") << "|" << format_double(s.beta_under, "%.3f") << '\n';
    }
  } catch (const FitError& e) {
    throw CliFailure{kExitEmpty, e.what()};
  }
  if (!dir.empty()) write_json(join(dir, "calibration.json"), doc);
  return kExitOk;
}

// ------------------------------------------------------------------- allan

struct AllanOptions {
  std::string windows;
  std::vector<double> taus;
};

int cmd_allan(const CommonOptions& opt, const AllanOptions& aopt, std::ostream& out) {
  const std::string dir = require_out_dir(opt, false);
  const std::string path = aopt.windows.empty() && !dir.empty() ? join(dir, "windows.txt") : aopt.windows;
  if (path.empty()) throw CliFailure{kExitConfig, "--windows is required"};
  if (!fs::is_regular_file(path)) throw CliFailure{kExitConfig, "cannot read input file " + path};
  const std::vector<CountWindow> windows = read_windows(path);
  if (windows.size() < 3) throw CliFailure{kExitEmpty, "fewer than three windows"};
  const json table = allan_table(windows, aopt.taus);
  if (!table.contains("cavity") || table["cavity"]["points"].empty()) {
    throw CliFailure{kExitEmpty, "no averaging time leaves three bins"};
  }
  print_allan(table, out);
  return kExitOk;
}

void add_common(CLI::App* sub, CommonOptions& opt) {
  sub->add_option("--config", opt.config_path, "JSON configuration applied on top of the preset");
  sub->add_option("--seed", opt.seed, "Override the random seed");
  sub->add_option("--out", opt.out_dir, "Output directory (must exist)");
  sub->add_option("--preset", opt.preset, "Base preset")->check(CLI::IsMember({"paper2024"}));
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Photon-counting haloscope simulator and analysis toolkit", "haloscope"};
  app.require_subcommand(1);

  CommonOptions common;
  AnalyzeOptions analyze_opt;
  CalibrateOptions calibrate_opt;
  AllanOptions allan_opt;

  CLI::App* simulate = app.add_subcommand("simulate", "Generate a click stream and its schedule");
  add_common(simulate, common);

  CLI::App* analyze = app.add_subcommand("analyze", "Bin clicks, estimate bias and compute the exclusion curve");
  add_common(analyze, common);
  analyze->add_option("--stream", analyze_opt.stream_path, "Click stream (default: OUT/stream.txt)");
  analyze->add_option("--schedule", analyze_opt.schedule_path, "Schedule table (default: OUT/schedule.txt)");

  CLI::App* plan = app.add_subcommand("plan", "Projected scan speed and photon-counting advantage");
  add_common(plan, common);

  CLI::App* calibrate = app.add_subcommand("calibrate", "Fit Stark shift and dephasing, report flux and efficiency");
  add_common(calibrate, common);
  calibrate->add_option("--observations", calibrate_opt.observations,
                        "Five-column table delta domega dgamma err_domega err_dgamma (default: synthetic)");
  calibrate->add_option("--spectroscopy", calibrate_opt.spectroscopy, "Two-column table frequency counts");

  CLI::App* allan = app.add_subcommand("allan", "Allan variance of a window table");
  add_common(allan, common);
  allan->add_option("--windows", allan_opt.windows, "Window table written by analyze (default: OUT/windows.txt)");
  allan->add_option("--taus", allan_opt.taus, "Averaging times in seconds, comma separated")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(common, out);
    if (analyze->parsed()) return cmd_analyze(common, analyze_opt, out);
    if (plan->parsed()) return cmd_plan(common, out);
    if (calibrate->parsed()) return cmd_calibrate(common, calibrate_opt, out);
    if (allan->parsed()) return cmd_allan(common, allan_opt, out);
  } catch (const CliFailure& f) {
    err << "haloscope: " << f.message << '\n';
    return f.code;
  } catch (const ConfigError& e) {
    err << "haloscope: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "haloscope: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "haloscope: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace haloscope
