#include "haloscope/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "haloscope/constants.hpp"
#include "haloscope/log.hpp"

namespace haloscope {

namespace c = constants;

WindowBinner::WindowBinner(const ProtocolSchedule& schedule) : schedule_(schedule) {
  if (schedule.empty()) return;
  const std::size_t per_super = static_cast<std::size_t>(schedule.timing().cycles_per_super);
  std::vector<CountWindow> local(per_super);
  std::vector<double> first(per_super, std::numeric_limits<double>::infinity());
  std::vector<double> last(per_super, 0.0);
  for (std::size_t i = 0; i < schedule.blocks_per_super(); ++i) {
    const Block b = schedule.block(i);
    if (b.kind != BlockKind::kDetect || b.cycle < 0) continue;
    const auto k = static_cast<std::size_t>(b.cycle);
    first[k] = std::min(first[k], b.start_s);
    last[k] = std::max(last[k], b.end_s());
    if (b.phase == Phase::kOff) (b.label == 0 ? local[k].duration_s : local[k].sideband_s) += b.duration_s;
  }
  windows_.reserve(schedule.tuning_cycles());
  for (std::size_t s = 0; s < schedule.super_cycles(); ++s) {
    const double offset = schedule.period_s() * static_cast<double>(s);
    for (std::size_t k = 0; k < per_super; ++k) {
      CountWindow w = local[k];
      w.cycle = static_cast<std::int64_t>(s * per_super + k);
      w.start_s = first[k] + offset;
      w.nu_c_hz = schedule.nu_c(0.5 * (first[k] + last[k]) + offset);
      windows_.push_back(w);
    }
  }
}

void WindowBinner::add(const ClickRecord& click) {
  if (!has_cached_ || click.t < cached_.start_s || click.t >= cached_.end_s()) {
    std::size_t index = 0;
    try {
      index = schedule_.index_at(click.t);
    } catch (const std::out_of_range&) {
      std::ostringstream msg;
      msg << "stream/schedule mismatch: click at t = " << click.t << " s lies outside the schedule";
      throw std::invalid_argument(msg.str());
    }
    cached_ = schedule_.block(index);
    has_cached_ = true;
  }
  if (cached_.kind != BlockKind::kDetect || cached_.label != click.label || cached_.phase != click.phase) {
    std::ostringstream msg;
    msg << "stream/schedule mismatch: click at t = " << click.t << " s (label " << click.label << ", "
        << to_string(click.phase) << ") falls in a " << to_string(cached_.kind) << " block with label "
        << cached_.label << ", " << to_string(cached_.phase);
    throw std::invalid_argument(msg.str());
  }
  CountWindow& w = windows_[static_cast<std::size_t>(cached_.cycle)];
  if (click.phase == Phase::kOn) {
    ++w.n_on;
  } else if (click.label == 0) {
    ++w.n_c;
  } else {
    ++w.n_b;
  }
  ++total_;
}

std::vector<CountWindow> bin_counts(const ClickStream& stream, const ProtocolSchedule& schedule) {
  if (stream.duration_s > 0.0 && std::abs(stream.duration_s - schedule.duration_s()) > 1e-6 * schedule.duration_s()) {
    throw std::invalid_argument("stream/schedule mismatch: run durations differ");
  }
  WindowBinner binner(schedule);
  for (const ClickRecord& click : stream.clicks) binner.add(click);
  return binner.windows();
}

std::vector<AllanPoint> allan_variance(const std::vector<double>& series, double base_tau_s,
                                       const std::vector<double>& taus) {
  if (!(base_tau_s > 0.0)) throw std::invalid_argument("allan_variance: base tau must be positive");
  const Eigen::Map<const Eigen::VectorXd> x(series.data(), static_cast<Eigen::Index>(series.size()));
  std::vector<AllanPoint> out;
  out.reserve(taus.size());
  for (const double tau : taus) {
    const double ratio = tau / base_tau_s;
    const double m_real = std::round(ratio);
    if (!(m_real >= 1.0) || std::abs(ratio - m_real) > 1e-6 * ratio) {
      std::ostringstream msg;
      msg << "allan_variance: tau = " << tau << " s is not an integer multiple of " << base_tau_s << " s";
      throw std::invalid_argument(msg.str());
    }
    const auto m = static_cast<Eigen::Index>(m_real);
    const Eigen::Index bins = x.size() / m;
    if (bins < 3) {
      std::ostringstream msg;
      msg << "allan_variance: tau = " << tau << " s leaves " << bins << " bins, at least 3 are needed";
      throw std::invalid_argument(msg.str());
    }
    const Eigen::VectorXd means =
        x.head(bins * m).reshaped(m, bins).colwise().mean().transpose();
    const Eigen::VectorXd diff = means.tail(bins - 1) - means.head(bins - 1);
    out.push_back({tau, 0.5 * diff.squaredNorm() / static_cast<double>(bins - 1), static_cast<std::size_t>(bins)});
  }
  return out;
}

double allan_minimum_tau(const std::vector<AllanPoint>& points) {
  if (points.size() < 2) throw std::invalid_argument("allan_minimum_tau: need at least two points");
  // First tabulated point that both following points (where present) exceed.
  std::size_t turn = points.size();
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const bool next_up = points[i + 1].variance > points[i].variance;
    const bool after_up = i + 2 >= points.size() || points[i + 2].variance > points[i].variance;
    if (next_up && after_up) {
      turn = i;
      break;
    }
  }
  if (turn == points.size()) return std::numeric_limits<double>::infinity();

  // Weighted fit of a/tau + b*tau around the turning point.
  const std::size_t lo = turn >= 2 ? turn - 2 : 0;
  const std::size_t hi = std::min(points.size() - 1, turn + 2);
  const auto n = static_cast<Eigen::Index>(hi - lo + 1);
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const AllanPoint& p = points[lo + static_cast<std::size_t>(i)];
    // Relative scatter of an Allan estimate with B bins is about 1/sqrt(B-1).
    const double sigma = p.variance / std::sqrt(std::max<double>(static_cast<double>(p.bins) - 1.0, 1.0));
    const double w = sigma > 0.0 ? 1.0 / sigma : 1.0;
    design(i, 0) = w / p.tau_s;
    design(i, 1) = w * p.tau_s;
    rhs(i) = w * p.variance;
  }
  const Eigen::Vector2d ab = design.colPivHouseholderQr().solve(rhs);
  if (!(ab(0) > 0.0) || !(ab(1) > 0.0)) return points[turn].tau_s;
  return std::sqrt(ab(0) / ab(1));
}

std::vector<double> window_rates(const std::vector<CountWindow>& windows, AllanSeries which) {
  std::vector<double> out;
  out.reserve(windows.size());
  for (const CountWindow& w : windows) {
    const double rc = w.duration_s > 0.0 ? static_cast<double>(w.n_c) / w.duration_s : 0.0;
    const double rb = w.sideband_s > 0.0 ? static_cast<double>(w.n_b) / w.sideband_s : 0.0;
    switch (which) {
      case AllanSeries::kCavity:
        out.push_back(rc);
        break;
      case AllanSeries::kSideband:
        out.push_back(rb);
        break;
      case AllanSeries::kDifference:
        out.push_back(rc - rb);
        break;
    }
  }
  return out;
}

BiasEstimate estimate_bias(const std::vector<CountWindow>& windows) {
  if (windows.empty()) throw std::invalid_argument("estimate_bias: no windows");
  double nc = 0.0;
  double nb = 0.0;
  for (const CountWindow& w : windows) {
    nc += static_cast<double>(w.n_c);
    nb += static_cast<double>(w.n_b);
  }
  if (nb <= 0.0) throw std::domain_error("estimate_bias: no sideband counts");
  BiasEstimate out;
  out.k_b = nc / nb - 1.0;
  out.sigma = nc > 0.0 ? (nc / nb) * std::sqrt(1.0 / nc + 1.0 / nb) : std::numeric_limits<double>::infinity();
  return out;
}

namespace {

// (1 + u) log(1 + u) - u, accurate near u = 0.
double poisson_deviance_kernel(double u) {
  if (std::abs(u) < 1e-3) {
    const double u2 = u * u;
    return u2 * (0.5 - u / 6.0 + u2 / 12.0 - u2 * u / 20.0);
  }
  return (1.0 + u) * std::log1p(u) - u;
}

}  // namespace

SignificanceResult significance(double n_c_star, double n_b_star, double k_b) {
  if (!(n_c_star > 0.0) || !(n_b_star > 0.0) || !std::isfinite(n_c_star) || !std::isfinite(n_b_star)) {
    throw std::invalid_argument("significance: counts must be positive");
  }
  if (!(k_b > -1.0)) throw std::invalid_argument("significance: k_b must exceed -1");
  if (n_c_star < 100.0 || n_b_star < 100.0) {
    log::warn("significance: fewer than 100 counts, the chi-square approximation is loose");
  }
  const double total = n_c_star + n_b_star;
  const double mu_b = total / (2.0 + k_b);
  const double mu_c = (1.0 + k_b) * mu_b;
  const double deviance = 2.0 * (mu_c * poisson_deviance_kernel(n_c_star / mu_c - 1.0) +
                                 mu_b * poisson_deviance_kernel(n_b_star / mu_b - 1.0));
  SignificanceResult out;
  out.s = std::sqrt(std::max(deviance, 0.0));
  out.n_c_star = n_c_star;
  out.n_b_star = n_b_star;
  out.k_b = k_b;
  out.excess = n_c_star > (1.0 + k_b) * n_b_star;
  return out;
}

CountLimit upper_limit_counts(double n_b_star, double k_b, double z) {
  if (!(n_b_star > 0.0)) throw std::invalid_argument("upper_limit_counts: N_b must be positive");
  if (!(z > 0.0)) throw std::invalid_argument("upper_limit_counts: z must be positive");
  const double floor_count = (1.0 + k_b) * n_b_star;
  const auto s_at = [&](double nc) { return significance(nc, n_b_star, k_b).s; };
  const double lo0 = floor_count;
  double hi = floor_count + 2.0 * z * std::sqrt(floor_count + n_b_star) + 10.0;
  while (s_at(hi) < z) hi = floor_count + 2.0 * (hi - floor_count);
  double lo = lo0;
  for (int i = 0; i < 200 && hi - lo > 1e-9 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (s_at(mid) < z ? lo : hi) = mid;
  }
  CountLimit out;
  out.z = z;
  out.n95_continuous = hi;
  auto n = static_cast<std::int64_t>(std::ceil(hi));
  while (n > 1 && static_cast<double>(n - 1) > floor_count && s_at(static_cast<double>(n - 1)) >= z) --n;
  while (static_cast<double>(n) <= floor_count || s_at(static_cast<double>(n)) < z) ++n;
  out.n95 = n;
  return out;
}

double limit_power(double n95_star, double n_b_star, double eta, double nu_c_hz, double dt_m_s) {
  if (!(dt_m_s > 0.0)) throw std::invalid_argument("limit_power: dt_m must be positive");
  if (!(eta > 0.0)) throw std::invalid_argument("limit_power: eta must be positive");
  if (n95_star < n_b_star) throw std::invalid_argument("limit_power: N95 below N_b");
  return c::planck * nu_c_hz * (n95_star - n_b_star) / (eta * dt_m_s);
}

std::vector<Subinterval> partition_subintervals(const std::vector<CountWindow>& windows, double dt_m_s) {
  if (windows.empty()) throw std::invalid_argument("select_subinterval: no windows");
  if (!(dt_m_s > 0.0)) throw std::invalid_argument("select_subinterval: dt_m must be positive");
  const std::size_t n = windows.size();
  std::size_t k = n + 1;
  if (n >= 2) {
    std::vector<double> gaps;
    gaps.reserve(n - 1);
    for (std::size_t i = 1; i < n; ++i) gaps.push_back(windows[i].start_s - windows[i - 1].start_s);
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
    const double spacing = gaps[gaps.size() / 2];
    if (spacing > 0.0) k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(dt_m_s / spacing)));
  }
  const auto make = [&](std::size_t first, std::size_t count, bool truncated) {
    Subinterval s;
    s.first = first;
    s.count = count;
    s.truncated = truncated;
    for (std::size_t i = first; i < first + count; ++i) {
      s.n_c += windows[i].n_c;
      s.n_b += windows[i].n_b;
    }
    return s;
  };
  std::vector<Subinterval> groups;
  if (n < k) {
    log::warn("select_subinterval: data span is shorter than dt_m, using one truncated interval");
    groups.push_back(make(0, n, true));
    return groups;
  }
  for (std::size_t first = 0; first + k <= n; first += k) groups.push_back(make(first, k, false));
  return groups;
}

Subinterval select_subinterval(const std::vector<CountWindow>& windows, double dt_m_s) {
  const std::vector<Subinterval> groups = partition_subintervals(windows, dt_m_s);
  const auto best = std::min_element(groups.begin(), groups.end(),
                                     [](const Subinterval& a, const Subinterval& b) { return a.n_c < b.n_c; });
  return *best;
}

ExclusionResult exclusion_curve(const std::vector<CountWindow>& windows, const HaloscopeConfig& cfg,
                                const DetectorFigures& det, const ExclusionOptions& options) {
  if (windows.empty()) throw std::invalid_argument("exclusion_curve: no frequency steps");
  cfg.validate();
  det.validate();
  ExclusionResult result;
  result.linewidth_hz = options.linewidth_hz > 0.0 ? options.linewidth_hz : cfg.cavity_linewidth_hz();
  result.scan_speed_mhz_per_day = result.linewidth_hz / options.dt_m_s * c::seconds_per_day / 1e6;

  double nu_min = windows.front().nu_c_hz;
  for (const CountWindow& w : windows) nu_min = std::min(nu_min, w.nu_c_hz);
  std::map<std::int64_t, std::vector<CountWindow>> bins;
  for (const CountWindow& w : windows) {
    bins[static_cast<std::int64_t>(std::floor((w.nu_c_hz - nu_min) / result.linewidth_hz))].push_back(w);
  }

  for (const auto& [index, members] : bins) {
    ExclusionPoint p;
    p.windows = members.size();
    double nu_sum = 0.0;
    for (const CountWindow& w : members) nu_sum += w.nu_c_hz;
    p.nu_hz = nu_sum / static_cast<double>(members.size());
    p.m_a_ev = coupling_from_frequency(p.nu_hz).mass_ev;
    p.confidence = options.confidence;

    for (const Subinterval& g : partition_subintervals(members, options.dt_m_s)) {
      if (g.n_c <= 0 || g.n_b <= 0) continue;
      const SignificanceResult s = significance(static_cast<double>(g.n_c), static_cast<double>(g.n_b), options.k_b);
      if (s.excess) p.max_s = std::max(p.max_s, s.s);
    }
    p.discovery = p.max_s >= options.z_discovery;

    const Subinterval chosen = select_subinterval(members, options.dt_m_s);
    p.n_c = chosen.n_c;
    p.n_b = chosen.n_b;
    const SignificanceResult s =
        significance(static_cast<double>(chosen.n_c), static_cast<double>(chosen.n_b), options.k_b);
    p.s = s.s;
    const CountLimit limit = upper_limit_counts(static_cast<double>(chosen.n_b), options.k_b, options.z_limit);
    p.n95 = limit.n95;
    p.n95_continuous = limit.n95_continuous;
    p.p95_w = limit_power(static_cast<double>(limit.n95), static_cast<double>(chosen.n_b), det.eta, p.nu_hz,
                          options.dt_m_s);
    HaloscopeConfig at = cfg;
    at.nu_c_hz = p.nu_hz;
    p.g_limit = coupling_for_power(at, p.p95_w);
    result.points.push_back(p);
  }
  return result;
}

}  // namespace haloscope
