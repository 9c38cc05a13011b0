#include "haloscope/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace haloscope {

using nlohmann::json;

namespace {

// One schema drives both parsing and serialisation: `visit` walks the
// configuration and calls field()/section() on a Reader or a Writer.

class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void field(const char* key, T& out) {
    used_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
        if (std::is_unsigned_v<T> && it->template get<std::int64_t>() < 0) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->template get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path(key) + ": wrong type (" + it->type_name() + ")");
    }
  }

  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    used_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return;
    Reader sub(*it, path(key));
    fn(sub);
    sub.finish();
  }

  void finish() const {
    for (const auto& item : node_.items()) {
      if (!used_.count(item.key())) throw ConfigError(path(item.key().c_str()) + ": unknown key");
    }
  }

  std::string path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  static constexpr bool kReading = true;

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

class Writer {
 public:
  explicit Writer(std::string path = {}) : path_(std::move(path)) {}

  template <typename T>
  void field(const char* key, T& value) {
    node_[key] = value;
  }

  template <typename Fn>
  void section(const char* key, Fn&& fn) {
    Writer sub(path(key));
    fn(sub);
    node_[key] = std::move(sub.node_);
  }

  std::string path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  const json& node() const { return node_; }
  static constexpr bool kReading = false;

 private:
  json node_ = json::object();
  std::string path_;
};

template <typename V, typename E>
void enum_field(V& v, const char* key, E& value, std::initializer_list<std::pair<const char*, E>> names) {
  std::string text;
  for (const auto& [name, e] : names) {
    if (e == value) text = name;
  }
  v.field(key, text);
  if constexpr (V::kReading) {
    for (const auto& [name, e] : names) {
      if (text == name) {
        value = e;
        return;
      }
    }
    std::string allowed;
    for (const auto& [name, e] : names) allowed += std::string(allowed.empty() ? "" : ", ") + name;
    throw ConfigError(v.path(key) + ": expected one of " + allowed);
  }
}

template <typename V>
void visit_smpd(V& v, SmpdParams& s) {
  v.field("kappa_b_hz", s.kappa_b_hz);
  v.field("eta0", s.eta0);
  v.field("gamma_int_per_s", s.gamma_int);
  v.field("dnu_det_hz", s.dnu_det_hz);
  v.field("n_th", s.n_th);
  v.field("line_temperature_k", s.line_temperature_k);
  v.field("probe_flux_per_s", s.probe_flux);
  enum_field(v, "readout_mode", s.readout_mode,
             {{"folded", ReadoutMode::kFolded}, {"per_cycle", ReadoutMode::kPerCycle}});
  v.section("drift", [&](auto& d) {
    d.field("enabled", s.drift_enabled);
    d.field("relative_std", s.drift.relative_std);
    d.field("correlation_s", s.drift.correlation_s);
    d.field("amplitude", s.drift.amplitude);
  });
  v.section("walk", [&](auto& w) {
    w.field("enabled", s.walk_enabled);
    w.field("diffusion_per_s3", s.walk.diffusion);
    w.field("reversion_s", s.walk.reversion_s);
  });
  v.section("cycle", [&](auto& c) {
    c.field("pump_s", s.cycle.pump_s);
    c.field("readout_s", s.cycle.readout_s);
    c.field("latency_s", s.cycle.latency_s);
    c.field("wait_s", s.cycle.wait_s);
    c.field("pi_pulse_s", s.cycle.pi_pulse_s);
  });
  v.section("readout", [&](auto& r) {
    r.field("p1_given_e", s.readout.p1_given_e);
    r.field("p_thermal", s.readout.p_thermal);
    r.field("ground_misread", s.readout.ground_misread);
  });
}

template <typename V>
void visit_protocol(V& v, ProtocolTiming& p) {
  v.field("ramp_s", p.ramp_s);
  v.field("ramp_pause_s", p.ramp_pause_s);
  v.field("off_block_s", p.off_block_s);
  v.field("off_block_cycles", p.off_block_cycles);
  v.field("on_block_s", p.on_block_s);
  v.field("on_block_cycles", p.on_block_cycles);
  v.field("pattern", p.pattern);
  v.field("repeats", p.repeats);
  v.field("settle_s", p.settle_s);
  v.field("tuning_cycle_s", p.tuning_cycle_s);
  v.field("cycles_per_super", p.cycles_per_super);
  v.field("calibration_s", p.calibration_s);
  v.field("label_spacing_hz", p.label_spacing_hz);
}

template <typename V>
void visit_stream_inputs(V& v, RunConfig& c) {
  v.field("seed", c.seed);
  v.field("super_cycles", c.super_cycles);
  v.section("smpd", [&](auto& s) { visit_smpd(s, c.smpd); });
  v.section("protocol", [&](auto& s) { visit_protocol(s, c.smpd.protocol); });
  v.section("truth", [&](auto& s) {
    s.field("signal_rate_per_s", c.truth.signal_rate);
    s.field("signal_frequency_hz", c.truth.signal_frequency_hz);
    s.field("cavity_linewidth_hz", c.truth.cavity_linewidth_hz);
    s.field("k_b_true", c.truth.k_b_true);
  });
  v.section("tuning", [&](auto& s) {
    s.field("start_hz", c.tuning.start_hz);
    s.field("speed_hz_per_hour", c.tuning.speed_hz_per_hour);
    s.field("span_hz", c.tuning.span_hz);
  });
}

template <typename V>
void visit(V& v, RunConfig& c) {
  visit_stream_inputs(v, c);
  v.section("haloscope", [&](auto& s) {
    HaloscopeConfig& h = c.haloscope;
    s.field("g_gamma", h.g_gamma);
    s.field("rho_a_gev_cm3", h.rho_a_gev_cm3);
    s.field("lambda_mev", h.lambda_mev);
    s.field("b0_tesla", h.b0_tesla);
    s.field("volume_liters", h.volume_liters);
    s.field("form_factor", h.form_factor);
    s.field("nu_c_hz", h.nu_c_hz);
    s.field("q0", h.q0);
    s.field("beta", h.beta);
    s.field("q_a", h.q_a);
    s.field("q_loaded", h.q_loaded_stored);
    s.field("antenna_fraction", h.antenna_fraction);
  });
  v.section("detector", [&](auto& s) {
    DetectorFigures& d = c.detector;
    s.field("eta", d.eta);
    s.field("gamma_dc_per_s", d.gamma_dc);
    s.field("gamma_int_per_s", d.gamma_int);
    s.field("n_th", d.n_th);
    s.field("dnu_det_hz", d.dnu_det_hz);
    s.field("dnu_a_hz", d.dnu_a_hz);
  });
  v.section("analysis", [&](auto& s) {
    ExclusionOptions& e = c.analysis.exclusion;
    s.field("dt_m_s", e.dt_m_s);
    s.field("k_b", e.k_b);
    enum_field(s, "k_b_policy", c.analysis.bias_policy,
               {{"fixed", BiasPolicy::kFixed}, {"estimated", BiasPolicy::kEstimated}});
    s.field("z_limit", e.z_limit);
    s.field("confidence", e.confidence);
    s.field("z_discovery", e.z_discovery);
    s.field("linewidth_hz", e.linewidth_hz);
    s.field("allan_taus_s", c.analysis.allan_taus_s);
  });
  v.section("calibration", [&](auto& s) {
    DispersiveParams& d = c.calibration.dispersive;
    s.field("kappa_hz", d.kappa_hz);
    s.field("kappa_l_hz", d.kappa_l_hz);
    s.field("chi_hz", d.chi_hz);
    s.field("epsilon_hz", d.epsilon_hz);
    s.field("omega0_hz", d.omega0_hz);
    s.field("excess_rate_per_s", c.calibration.excess_rate.value);
    s.field("excess_rate_sigma_per_s", c.calibration.excess_rate.sigma);
    s.field("synthetic_points", c.calibration.synthetic_points);
    s.field("synthetic_span_hz", c.calibration.synthetic_span_hz);
    s.field("synthetic_noise_hz", c.calibration.synthetic_noise_hz);
  });
  v.section("plan", [&](auto& s) {
    s.field("span_hz", c.plan.span_hz);
    s.field("snr_target", c.plan.snr_target);
  });
  v.section("output", [&](auto& s) {
    enum_field(s, "stream_format", c.stream_format, {{"text", StreamFormat::kText}, {"binary", StreamFormat::kBinary}});
  });
}

void validate(const RunConfig& c) {
  const auto guard = [](const char* section, auto&& check) {
    try {
      check();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  guard("haloscope", [&] { c.haloscope.validate(); });
  guard("detector", [&] { c.detector.validate(); });
  guard("smpd", [&] { c.smpd.validate(); });
  guard("truth", [&] { c.truth.validate(); });
  guard("tuning", [&] { c.tuning.validate(); });
  guard("calibration", [&] { c.calibration.dispersive.validate(); });
  const ExclusionOptions& e = c.analysis.exclusion;
  if (!(e.dt_m_s > 0.0)) throw ConfigError("analysis.dt_m_s: must be positive");
  if (!(e.k_b > -1.0)) throw ConfigError("analysis.k_b: must exceed -1");
  if (!(e.z_limit > 0.0) || !(e.z_discovery > 0.0)) throw ConfigError("analysis: significance thresholds must be positive");
  if (!(e.confidence > 0.0 && e.confidence < 1.0)) throw ConfigError("analysis.confidence: must lie in (0, 1)");
  for (const double tau : c.analysis.allan_taus_s) {
    if (!(tau > 0.0)) throw ConfigError("analysis.allan_taus_s: entries must be positive");
  }
  if (c.calibration.synthetic_points < 8) throw ConfigError("calibration.synthetic_points: at least 8 required");
  if (!(c.calibration.synthetic_noise_hz > 0.0)) throw ConfigError("calibration.synthetic_noise_hz: must be positive");
  if (!(c.plan.span_hz >= 0.0)) throw ConfigError("plan.span_hz: must be non-negative");
  if (!(c.plan.snr_target > 0.0)) throw ConfigError("plan.snr_target: must be positive");
}

}  // namespace

std::size_t RunConfig::resolved_super_cycles() const {
  if (super_cycles > 0) return super_cycles;
  const double ramp = tuning.ramp_end_s();
  if (!(ramp > 0.0)) return 1;
  return static_cast<std::size_t>(std::ceil(ramp / smpd.protocol.super_cycle_s()));
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (const unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string digest_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

std::uint64_t RunConfig::digest() const {
  Writer w;
  RunConfig copy = *this;
  visit_stream_inputs(w, copy);
  return fnv1a(w.node().dump());
}

TruthParams RunConfig::seeded_truth() const {
  TruthParams t = truth;
  t.seed = seed;
  return t;
}

RunConfig RunConfig::paper2024() { return RunConfig{}; }

RunConfig parse_config(const std::string& text, const RunConfig& base) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ConfigError("config line " + std::to_string(line) + ": " + e.what());
  }
  RunConfig cfg = base;
  Reader reader(root, "");
  visit(reader, cfg);
  reader.finish();
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), base);
}

std::string dump_config(const RunConfig& cfg) {
  Writer w;
  RunConfig copy = cfg;
  visit(w, copy);
  return w.node().dump(2);
}

}  // namespace haloscope
