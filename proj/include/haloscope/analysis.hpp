#pragma once

// From clicks to limits: per-tuning-cycle count windows, Allan variance,
// bias, the likelihood-ratio significance of an on-resonance excess, count
// and power limits, and the per-linewidth exclusion curve.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "haloscope/axion_physics.hpp"
#include "haloscope/protocol.hpp"
#include "haloscope/smpd_sim.hpp"

namespace haloscope {

/// Counts of one tuning cycle. N_c is label-0 signal-OFF clicks, N_b the sum
/// over the four sideband labels; signal-ON clicks are kept separately.
struct CountWindow {
  std::int64_t cycle = 0;
  double start_s = 0.0;
  double duration_s = 0.0;   ///< label-0 signal-OFF time
  double sideband_s = 0.0;   ///< sideband signal-OFF time
  double nu_c_hz = 0.0;      ///< at the midpoint of the detection span
  std::int64_t n_c = 0;
  std::int64_t n_b = 0;
  std::int64_t n_on = 0;     ///< probe-phase clicks, all labels
};

/// Incremental binner so long runs never hold the click stream in memory.
class WindowBinner {
 public:
  explicit WindowBinner(const ProtocolSchedule& schedule);

  /// Throws std::invalid_argument when the click does not fall in a DETECT
  /// block with the same label and phase.
  void add(const ClickRecord& click);

  std::int64_t total_clicks() const { return total_; }
  const std::vector<CountWindow>& windows() const { return windows_; }

 private:
  const ProtocolSchedule& schedule_;
  std::vector<CountWindow> windows_;
  Block cached_;
  bool has_cached_ = false;
  std::int64_t total_ = 0;
};

std::vector<CountWindow> bin_counts(const ClickStream& stream, const ProtocolSchedule& schedule);

struct AllanPoint {
  double tau_s = 0.0;
  double variance = 0.0;
  std::size_t bins = 0;
};

/// Non-overlapping Allan variance of a series sampled every `base_tau_s`.
/// Each tau must be an integer multiple of the base and leave at least three
/// aggregated bins.
std::vector<AllanPoint> allan_variance(const std::vector<double>& series, double base_tau_s,
                                       const std::vector<double>& taus);

/// Position of the first Allan minimum: the first point exceeded by the two
/// that follow it, refined by a weighted a/tau + b*tau fit over its
/// neighbours. +infinity when the variance never turns up.
double allan_minimum_tau(const std::vector<AllanPoint>& points);

enum class AllanSeries { kCavity, kSideband, kDifference };

/// Window rates [1/s] of one series; the difference is N_c/T_c - N_b/T_b.
std::vector<double> window_rates(const std::vector<CountWindow>& windows, AllanSeries which);

struct BiasEstimate {
  double k_b = 0.0;
  double sigma = 0.0;
};

/// Pooled sum(N_c)/sum(N_b) - 1. Throws std::domain_error when sum(N_b) = 0.
BiasEstimate estimate_bias(const std::vector<CountWindow>& windows);

inline constexpr double kConservativeBias = 0.05;

struct SignificanceResult {
  double s = 0.0;
  double n_c_star = 0.0;
  double n_b_star = 0.0;
  double k_b = 0.0;
  bool excess = false;  ///< n_c_star > (1 + k_b) n_b_star
};

/// Likelihood-ratio significance for N_c counts on resonance against N_b in
/// the sidebands with the cavity channel biased by (1 + k_b). Throws
/// std::invalid_argument for non-positive counts.
SignificanceResult significance(double n_c_star, double n_b_star, double k_b);

struct CountLimit {
  std::int64_t n95 = 0;        ///< smallest integer count reaching z
  double n95_continuous = 0.0; ///< root of S = z
  double z = 2.0;
};

/// Smallest N_c >= (1+k_b) N_b with significance >= z.
CountLimit upper_limit_counts(double n_b_star, double k_b, double z = 2.0);

/// h nu (N95 - N_b) / (eta dt_m).
double limit_power(double n95_star, double n_b_star, double eta, double nu_c_hz, double dt_m_s = 600.0);

struct Subinterval {
  std::size_t first = 0;
  std::size_t count = 0;
  std::int64_t n_c = 0;
  std::int64_t n_b = 0;
  bool truncated = false;
};

/// Consecutive groups of round(dt_m / median window spacing) windows; the one
/// with the fewest cavity counts wins (first on ties).
Subinterval select_subinterval(const std::vector<CountWindow>& windows, double dt_m_s = 600.0);
std::vector<Subinterval> partition_subintervals(const std::vector<CountWindow>& windows, double dt_m_s = 600.0);

struct ExclusionOptions {
  double dt_m_s = 600.0;
  double k_b = kConservativeBias;
  double z_limit = 2.0;
  double confidence = 0.95;
  double z_discovery = 5.0;
  double linewidth_hz = 0.0;  ///< 0: the configured cavity linewidth
};

struct ExclusionPoint {
  double nu_hz = 0.0;
  double m_a_ev = 0.0;
  std::size_t windows = 0;
  std::int64_t n_c = 0;
  std::int64_t n_b = 0;
  double s = 0.0;          ///< significance of the selected sub-interval
  double max_s = 0.0;      ///< largest excess significance in the bin
  bool discovery = false;
  std::int64_t n95 = 0;
  double n95_continuous = 0.0;
  double p95_w = 0.0;
  double g_limit = 0.0;    ///< GeV^-1
  double confidence = 0.95;
};

struct ExclusionResult {
  std::vector<ExclusionPoint> points;
  double scan_speed_mhz_per_day = 0.0;
  double linewidth_hz = 0.0;
};

/// Per-linewidth limits from binned windows.
ExclusionResult exclusion_curve(const std::vector<CountWindow>& windows, const HaloscopeConfig& cfg,
                                const DetectorFigures& det, const ExclusionOptions& options = {});

}  // namespace haloscope
