#pragma once

// Run configuration: JSON with unit-suffixed keys, paper values as defaults,
// unknown keys rejected with their full path.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "haloscope/analysis.hpp"
#include "haloscope/axion_physics.hpp"
#include "haloscope/calibration.hpp"
#include "haloscope/protocol.hpp"
#include "haloscope/smpd_sim.hpp"

namespace haloscope {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BiasPolicy { kFixed, kEstimated };
enum class StreamFormat { kText, kBinary };

struct AnalysisOptions {
  ExclusionOptions exclusion;
  BiasPolicy bias_policy = BiasPolicy::kFixed;
  /// Allan averaging times; empty selects powers of two of the window time.
  std::vector<double> allan_taus_s;
};

struct CalibrationInputs {
  DispersiveParams dispersive;
  Measured excess_rate{9233.0, 30.0};
  /// Synthetic observation set used when no table is supplied.
  int synthetic_points = 41;
  double synthetic_span_hz = 8e6;
  double synthetic_noise_hz = 60.0;
};

struct PlanOptions {
  double span_hz = 0.4e6;
  double snr_target = 2.0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  /// 0 runs as many super-cycles as the tuning span needs.
  std::size_t super_cycles = 0;
  HaloscopeConfig haloscope = HaloscopeConfig::paper_preset();
  DetectorFigures detector = DetectorFigures::paper_preset();
  SmpdParams smpd;
  TruthParams truth;
  TuningPlan tuning;
  AnalysisOptions analysis;
  CalibrationInputs calibration;
  PlanOptions plan;
  StreamFormat stream_format = StreamFormat::kText;

  std::size_t resolved_super_cycles() const;
  /// FNV-1a over everything that shapes the click stream (seed included).
  std::uint64_t digest() const;
  TruthParams seeded_truth() const;

  static RunConfig paper2024();
};

/// Parse `text` on top of `base`. Throws ConfigError naming the line for
/// syntax errors and the key path for unknown keys, wrong types or invalid
/// values.
RunConfig parse_config(const std::string& text, const RunConfig& base = RunConfig::paper2024());
RunConfig load_config(const std::string& path, const RunConfig& base = RunConfig::paper2024());

/// Canonical JSON text of the full configuration.
std::string dump_config(const RunConfig& cfg);

std::string digest_hex(std::uint64_t digest);
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace haloscope
