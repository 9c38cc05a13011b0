#include "haloscope/cavity.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "haloscope/constants.hpp"
#include "haloscope/least_squares.hpp"

namespace haloscope {

namespace c = constants;

void CavityMode::validate() const {
  if (!(nu_c_hz > 0.0)) throw std::invalid_argument("cavity: nu_c_hz must be positive");
  if (!(kappa_ext_hz >= 0.0) || !(kappa_int_hz >= 0.0)) {
    throw std::invalid_argument("cavity: coupling rates must be non-negative");
  }
  if (!(kappa_tot_hz() > 0.0)) throw std::invalid_argument("cavity: total linewidth must be positive");
}

CavityMode CavityMode::from_quality(double nu_c_hz, double q0, double beta) {
  if (!(q0 > 0.0) || !(beta >= 0.0)) throw std::invalid_argument("cavity: q0 > 0 and beta >= 0 required");
  CavityMode m;
  m.nu_c_hz = nu_c_hz;
  m.kappa_int_hz = nu_c_hz / q0;
  m.kappa_ext_hz = beta * m.kappa_int_hz;
  m.validate();
  return m;
}

CavityMode CavityMode::from_loaded(double nu_c_hz, double q_loaded, double beta) {
  if (!(q_loaded > 0.0)) throw std::invalid_argument("cavity: q_loaded must be positive");
  return from_quality(nu_c_hz, q_loaded * (1.0 + beta), beta);
}

double reflection_mag2(double delta_hz, const CavityMode& mode) {
  mode.validate();
  const std::complex<double> denom(mode.kappa_tot_hz() / 2.0, -delta_hz);
  return std::norm(1.0 - mode.kappa_ext_hz / denom);
}

PulseDrive PulseDrive::square(double amplitude, double length_s, double detuning_hz) {
  PulseDrive d;
  d.detuning_hz = detuning_hz;
  d.start_s = {0.0};
  d.amplitude = {amplitude};
  d.duration_s = length_s;
  d.validate();
  return d;
}

void PulseDrive::validate() const {
  if (start_s.size() != amplitude.size()) throw std::invalid_argument("pulse: start/amplitude size mismatch");
  if (!std::isfinite(duration_s) || duration_s < 0.0) throw std::invalid_argument("pulse: duration must be finite");
  for (std::size_t i = 0; i < start_s.size(); ++i) {
    if (amplitude[i] < 0.0 || !std::isfinite(amplitude[i])) {
      throw std::invalid_argument("pulse: envelope must be non-negative");
    }
    if (i > 0 && start_s[i] < start_s[i - 1]) throw std::invalid_argument("pulse: segment starts must increase");
  }
}

double PulseDrive::at(double t) const {
  if (start_s.empty() || t < start_s.front() || t >= duration_s) return 0.0;
  const auto it = std::upper_bound(start_s.begin(), start_s.end(), t);
  return amplitude[static_cast<std::size_t>(it - start_s.begin()) - 1];
}

double max_stable_step(const CavityMode& mode, const PulseDrive& drive) {
  return 1.0 / (20.0 * std::max(mode.kappa_tot_hz(), std::abs(drive.detuning_hz)));
}

Eigen::VectorXd pulse_response(const CavityMode& mode, const PulseDrive& drive, const Eigen::VectorXd& t_grid,
                               double step_s) {
  mode.validate();
  drive.validate();
  const double bound = max_stable_step(mode, drive);
  if (step_s > bound) {
    std::ostringstream msg;
    msg << "pulse_response: step " << step_s << " s exceeds the stability bound " << bound
        << " s (1/(20 max(kappa_tot, |detuning|)))";
    throw std::domain_error(msg.str());
  }
  const double h_max = step_s > 0.0 ? step_s : bound;

  using cplx = std::complex<double>;
  const cplx rate(-c::pi * mode.kappa_tot_hz(), 2.0 * c::pi * drive.detuning_hz);
  const double coupling = std::sqrt(2.0 * c::pi * mode.kappa_ext_hz);

  std::vector<double> breaks(drive.start_s);
  breaks.push_back(drive.duration_s);
  std::sort(breaks.begin(), breaks.end());

  Eigen::VectorXd out(t_grid.size());
  cplx a(0.0, 0.0);
  double t = 0.0;
  for (Eigen::Index k = 0; k < t_grid.size(); ++k) {
    const double target = t_grid(k);
    if (target < t) throw std::invalid_argument("pulse_response: time grid must be non-decreasing and >= 0");
    while (t < target) {
      auto next_break = std::upper_bound(breaks.begin(), breaks.end(), t);
      const double stop = next_break == breaks.end() ? target : std::min(target, *next_break);
      const cplx source = coupling * drive.at(t);
      const auto deriv = [&](cplx y) { return rate * y + source; };
      const double span = stop - t;
      const auto n = static_cast<long>(std::ceil(span / h_max));
      const double h = span / static_cast<double>(n);
      for (long i = 0; i < n; ++i) {
        const cplx k1 = deriv(a);
        const cplx k2 = deriv(a + 0.5 * h * k1);
        const cplx k3 = deriv(a + 0.5 * h * k2);
        const cplx k4 = deriv(a + h * k3);
        a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      t = stop;
    }
    out(k) = std::norm(drive.at(target) - coupling * a);
  }
  return out;
}

std::pair<double, double> beta_pair_from_depth(double depth) {
  if (!(depth > 0.0)) throw std::domain_error("beta_pair_from_depth: depth must be positive");
  if (depth >= 1.0) return {1.0, 1.0};
  const double root = 2.0 * std::sqrt(1.0 - depth);
  const double over = (2.0 - depth + root) / depth;
  return {over, 1.0 / over};
}

namespace {

struct DipCoordinates {
  double center;
  double scale;
};

Eigen::VectorXd dip_model(const Eigen::VectorXd& x, const Eigen::VectorXd& p) {
  const Eigen::ArrayXd u = 2.0 * (x.array() - p(2)) / p(3);
  return (p(0) * (1.0 - p(1) / (1.0 + u.square()))).matrix();
}

// Width between the half-depth crossings around the minimum, in x units.
double half_depth_width(const Eigen::VectorXd& x, const Eigen::VectorXd& y, Eigen::Index imin, double level) {
  double left = std::numeric_limits<double>::quiet_NaN();
  double right = left;
  for (Eigen::Index i = imin; i > 0; --i) {
    if (y(i - 1) >= level) {
      left = x(i) + (x(i - 1) - x(i)) * (level - y(i)) / (y(i - 1) - y(i));
      break;
    }
  }
  for (Eigen::Index i = imin; i + 1 < x.size(); ++i) {
    if (y(i + 1) >= level) {
      right = x(i) + (x(i + 1) - x(i)) * (level - y(i)) / (y(i + 1) - y(i));
      break;
    }
  }
  if (std::isnan(left) && std::isnan(right)) return 0.0;
  if (std::isnan(left)) return 2.0 * (right - x(imin));
  if (std::isnan(right)) return 2.0 * (x(imin) - left);
  return right - left;
}

}  // namespace

SpectroscopyFit fit_cavity_spectroscopy(const Eigen::VectorXd& freq_hz, const Eigen::VectorXd& counts) {
  const Eigen::Index n = freq_hz.size();
  if (n != counts.size()) throw std::invalid_argument("spectroscopy: frequency and count columns differ in length");
  if (n < 7) throw std::invalid_argument("spectroscopy: at least 7 frequency points are required");
  if ((counts.array() < 0.0).any()) throw std::invalid_argument("spectroscopy: counts must be non-negative");

  // Sort by frequency and move to centred, normalised coordinates.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return freq_hz(a) < freq_hz(b); });
  Eigen::VectorXd f(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    f(i) = freq_hz(order[static_cast<std::size_t>(i)]);
    y(i) = counts(order[static_cast<std::size_t>(i)]);
  }
  const double span = f(n - 1) - f(0);
  if (!(span > 0.0)) throw std::invalid_argument("spectroscopy: frequencies must not all coincide");
  const DipCoordinates coords{0.5 * (f(0) + f(n - 1)), 0.5 * span};
  const Eigen::VectorXd x = ((f.array() - coords.center) / coords.scale).matrix();

  Eigen::VectorXd sorted = y;
  std::sort(sorted.data(), sorted.data() + n);
  const Eigen::Index top = std::max<Eigen::Index>(1, n / 4);
  const double baseline = sorted.tail(top).mean();
  Eigen::Index imin = 0;
  const double ymin = y.minCoeff(&imin);
  if (!(baseline - ymin > 5.0 * std::sqrt(std::max(baseline, 1.0)))) {
    throw FitError("spectroscopy: no resonance found", 0.0, static_cast<int>(n - 4));
  }
  const double depth0 = 1.0 - ymin / baseline;
  double width0 = half_depth_width(x, y, imin, baseline * (1.0 - depth0 / 2.0));
  if (!(width0 > 0.0)) width0 = 0.25;

  Eigen::VectorXd p(4);
  p << baseline, depth0, x(imin), width0;

  Eigen::VectorXd sigma = y.cwiseMax(1.0).cwiseSqrt();
  LmResult<double> fit;
  for (int pass = 0; pass < 2; ++pass) {
    const auto residual = [&](const Eigen::VectorXd& q) -> Eigen::VectorXd {
      return ((dip_model(x, q) - y).array() / sigma.array()).matrix();
    };
    Eigen::VectorXd steps(4);
    steps << 1e-7 * std::abs(p(0)), 1e-7, 1e-7 * std::abs(p(3)), 1e-7 * std::abs(p(3));
    fit = levenberg_marquardt(residual, p, steps);
    p = fit.params;
    sigma = dip_model(x, p).cwiseMax(1.0).cwiseSqrt();
  }
  if (!fit.converged || !fit.covariance.allFinite()) {
    throw FitError("spectroscopy: fit did not converge", fit.chi2, fit.dof());
  }
  const double depth = p(1);
  const double depth_sigma = fit.sigma(1);
  if (!(depth > 0.0) || depth < 3.0 * depth_sigma) {
    throw FitError("spectroscopy: no resonance found", fit.chi2, fit.dof());
  }

  SpectroscopyFit out;
  out.baseline = p(0);
  out.depth = std::min(depth, 1.0);
  out.depth_sigma = depth_sigma;
  out.nu_c_hz = coords.center + coords.scale * p(2);
  out.nu_c_sigma_hz = coords.scale * fit.sigma(2);
  out.linewidth_hz = coords.scale * std::abs(p(3));
  out.linewidth_sigma_hz = coords.scale * fit.sigma(3);
  if (span < 3.0 * out.linewidth_hz) {
    throw std::invalid_argument("spectroscopy: frequency span covers fewer than three linewidths");
  }
  std::tie(out.beta_over, out.beta_under) = beta_pair_from_depth(out.depth);
  out.q_loaded = out.nu_c_hz / out.linewidth_hz;
  out.chi2 = fit.chi2;
  out.dof = fit.dof();

  // Linear propagation of the fit covariance into both Q0 readings.
  const auto q0_of = [&](const Eigen::VectorXd& q, bool over) {
    const auto betas = beta_pair_from_depth(std::min(q(1), 1.0));
    const double nu = coords.center + coords.scale * q(2);
    const double ql = nu / (coords.scale * std::abs(q(3)));
    return ql * (1.0 + (over ? betas.first : betas.second));
  };
  for (const bool over : {true, false}) {
    Eigen::VectorXd grad(4);
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double h = 1e-6 * std::max(std::abs(p(j)), 1e-3);
      Eigen::VectorXd up = p, down = p;
      up(j) += h;
      down(j) -= h;
      grad(j) = (q0_of(up, over) - q0_of(down, over)) / (2.0 * h);
    }
    const double var = grad.dot(fit.covariance * grad);
    (over ? out.q0_over : out.q0_under) = q0_of(p, over);
    (over ? out.q0_over_sigma : out.q0_under_sigma) = std::sqrt(std::max(var, 0.0));
  }
  return out;
}

namespace {

double candidate_chi2(const PulseTrace& trace, const PulseDrive& drive, const CavityMode& mode) {
  const Eigen::VectorXd model = pulse_response(mode, drive, trace.t_s);
  const Eigen::Index n = trace.t_s.size();
  Eigen::MatrixXd design(n, 2);
  design.col(0) = model.cwiseQuotient(trace.sigma);
  design.col(1) = trace.sigma.cwiseInverse();
  const Eigen::VectorXd rhs = trace.power.cwiseQuotient(trace.sigma);
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(rhs);
  return (design * coef - rhs).squaredNorm();
}

}  // namespace

BetaChoice disambiguate_beta(const PulseTrace& trace, const PulseDrive& drive, const CavityMode& over,
                             const CavityMode& under, double min_ratio) {
  const Eigen::Index n = trace.t_s.size();
  if (n < 3 || trace.power.size() != n || trace.sigma.size() != n) {
    throw std::invalid_argument("disambiguate_beta: trace columns must share a length of at least 3");
  }
  if ((trace.sigma.array() <= 0.0).any()) throw std::invalid_argument("disambiguate_beta: sigma must be positive");

  BetaChoice out;
  out.chi2_over = candidate_chi2(trace, drive, over);
  out.chi2_under = candidate_chi2(trace, drive, under);
  const double better = std::min(out.chi2_over, out.chi2_under);
  const double worse = std::max(out.chi2_over, out.chi2_under);
  if (worse <= std::numeric_limits<double>::min()) {
    out.residual_ratio = 1.0;
  } else if (better <= std::numeric_limits<double>::min()) {
    out.residual_ratio = std::numeric_limits<double>::infinity();
  } else {
    out.residual_ratio = worse / better;
  }
  if (out.residual_ratio < min_ratio) return out;
  const bool pick_over = out.chi2_over < out.chi2_under;
  out.outcome = pick_over ? Coupling::kOvercoupled : Coupling::kUndercoupled;
  out.beta = pick_over ? over.beta() : under.beta();
  return out;
}

}  // namespace haloscope
