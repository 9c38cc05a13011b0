#include "haloscope/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "haloscope/constants.hpp"
#include "haloscope/least_squares.hpp"

namespace haloscope {

namespace c = constants;

void DispersiveParams::validate() const {
  if (!(kappa_hz > 0.0)) throw std::invalid_argument("dispersive: kappa must be positive");
  if (!(kappa_l_hz >= 0.0)) throw std::invalid_argument("dispersive: kappa_l must be non-negative");
  if (!(kappa_hz > kappa_l_hz)) throw std::invalid_argument("dispersive: kappa must exceed kappa_l");
  if (chi_hz == 0.0 || !std::isfinite(chi_hz)) throw std::invalid_argument("dispersive: chi must be non-zero");
  if (!std::isfinite(epsilon_hz)) throw std::invalid_argument("dispersive: epsilon must be finite");
  if (!(omega0_hz > 0.0)) throw std::invalid_argument("dispersive: omega0 must be positive");
}

StarkResponse stark_dephasing_model(double delta_hz, const DispersiveParams& p) {
  const std::complex<double> k(p.kappa_hz, p.chi_hz);
  const std::complex<double> z = -4.0 * p.chi_hz * p.epsilon_hz * p.epsilon_hz / (k * k + 4.0 * delta_hz * delta_hz);
  return {z.real(), z.imag()};
}

std::complex<double> coherent_amplitude(double delta_hz, const DispersiveParams& p, bool excited) {
  const double pull = excited ? p.chi_hz / 2.0 : -p.chi_hz / 2.0;
  return p.epsilon_hz / std::complex<double>(p.kappa_hz / 2.0, delta_hz + pull);
}

StarkResponse stark_from_amplitudes(double delta_hz, const DispersiveParams& p) {
  const std::complex<double> z =
      -p.chi_hz * std::conj(coherent_amplitude(delta_hz, p, false)) * coherent_amplitude(delta_hz, p, true);
  return {z.real(), z.imag()};
}

std::vector<RamseyObservation> synthetic_observations(const DispersiveParams& p, int n_points, double span_hz,
                                                      double noise_hz, std::uint64_t seed) {
  if (n_points < 2) throw std::invalid_argument("synthetic_observations: need at least two points");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_hz);
  std::vector<RamseyObservation> out;
  out.reserve(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    RamseyObservation o;
    o.delta_hz = -0.5 * span_hz + span_hz * i / (n_points - 1);
    const StarkResponse m = stark_dephasing_model(o.delta_hz, p);
    o.delta_omega = m.delta_omega + noise(rng);
    o.delta_gamma = m.delta_gamma + noise(rng);
    o.sigma_omega = noise_hz;
    o.sigma_gamma = noise_hz;
    out.push_back(o);
  }
  return out;
}

namespace {

struct Scaling {
  double kappa = 1e6;
  double chi = 1e6;
  double epsilon = 1e3;
};

DispersiveParams unpack(const Eigen::VectorXd& x, const DispersiveParams& fixed, const Scaling& s) {
  DispersiveParams p = fixed;
  p.kappa_hz = x(0) * s.kappa;
  p.chi_hz = x(1) * s.chi;
  p.epsilon_hz = x(2) * s.epsilon;
  return p;
}

// Full width at half maximum of the dephasing peak around index `peak`.
double peak_width(const std::vector<RamseyObservation>& obs, std::size_t peak) {
  const double half = 0.5 * obs[peak].delta_gamma;
  const auto crossing = [&](int dir) {
    for (auto i = static_cast<long>(peak); i + dir >= 0 && i + dir < static_cast<long>(obs.size()); i += dir) {
      const RamseyObservation& a = obs[static_cast<std::size_t>(i)];
      const RamseyObservation& b = obs[static_cast<std::size_t>(i + dir)];
      if (b.delta_gamma <= half) {
        return a.delta_hz + (b.delta_hz - a.delta_hz) * (a.delta_gamma - half) / (a.delta_gamma - b.delta_gamma);
      }
    }
    return obs[peak].delta_hz;
  };
  const double w = std::abs(crossing(+1) - crossing(-1));
  if (w > 0.0) return w;
  return std::abs(obs.back().delta_hz - obs.front().delta_hz) / 20.0;
}

}  // namespace

DispersiveFit fit_dispersive(const std::vector<RamseyObservation>& observations, const DispersiveParams& fixed) {
  if (observations.size() < 8) throw std::invalid_argument("fit_dispersive: at least 8 detunings are required");
  std::vector<RamseyObservation> obs(observations);
  std::sort(obs.begin(), obs.end(),
            [](const RamseyObservation& a, const RamseyObservation& b) { return a.delta_hz < b.delta_hz; });
  if (!(obs.front().delta_hz < 0.0 && obs.back().delta_hz > 0.0)) {
    throw std::invalid_argument("fit_dispersive: detunings must span both sides of the resonance");
  }
  for (const RamseyObservation& o : obs) {
    if (!(o.sigma_omega > 0.0) || !(o.sigma_gamma > 0.0)) {
      throw std::invalid_argument("fit_dispersive: uncertainties must be positive");
    }
  }

  // Initial guess from the dephasing peaks and the sign of the shift at zero.
  std::size_t peak = 0;
  for (std::size_t i = 1; i < obs.size(); ++i) {
    if (obs[i].delta_gamma > obs[peak].delta_gamma) peak = i;
  }
  std::size_t centre = 0;
  for (std::size_t i = 1; i < obs.size(); ++i) {
    if (std::abs(obs[i].delta_hz) < std::abs(obs[centre].delta_hz)) centre = i;
  }
  const double chi_sign = obs[centre].delta_omega >= 0.0 ? 1.0 : -1.0;
  const double chi0 = chi_sign * std::max(2.0 * std::abs(obs[peak].delta_hz), 1.0);
  const double kappa0 = peak_width(obs, peak);
  const double eps0 = std::sqrt(std::max(obs[peak].delta_gamma, 0.0) * kappa0 / 2.0);

  const Scaling s{std::max(kappa0, 1.0), std::max(std::abs(chi0), 1.0), std::max(eps0, 1.0)};
  const auto n = static_cast<Eigen::Index>(obs.size());
  const auto residual = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const DispersiveParams p = unpack(x, fixed, s);
    Eigen::VectorXd r(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const RamseyObservation& o = obs[static_cast<std::size_t>(i)];
      const StarkResponse m = stark_dephasing_model(o.delta_hz, p);
      r(2 * i) = (m.delta_omega - o.delta_omega) / o.sigma_omega;
      r(2 * i + 1) = (m.delta_gamma - o.delta_gamma) / o.sigma_gamma;
    }
    return r;
  };
  Eigen::VectorXd x0(3);
  x0 << kappa0 / s.kappa, chi0 / s.chi, eps0 / s.epsilon;
  const Eigen::VectorXd steps = Eigen::VectorXd::Constant(3, 1e-7);
  const LmResult<double> fit = levenberg_marquardt(residual, x0, steps);
  if (!fit.converged || !fit.covariance.allFinite()) {
    throw FitError("fit_dispersive: fit did not converge", fit.chi2, fit.dof());
  }
  if (!(fit.params(0) > 0.0) || fit.params(2) == 0.0) {
    throw FitError("fit_dispersive: parameter at bound (kappa or epsilon reached zero)", fit.chi2, fit.dof());
  }
  // The Stark shift scales as epsilon^2; below 3 sigma the drive is not resolved.
  if (std::abs(fit.params(2)) < 3.0 * std::sqrt(fit.covariance(2, 2))) {
    throw FitError("fit_dispersive: drive amplitude not resolved above noise", fit.chi2, fit.dof());
  }

  DispersiveFit out;
  out.params = unpack(fit.params, fixed, s);
  out.params.epsilon_hz = std::abs(out.params.epsilon_hz);
  const Eigen::Vector3d scale(s.kappa, s.chi, s.epsilon);
  out.covariance = scale.asDiagonal() * fit.covariance * scale.asDiagonal();
  out.chi2 = fit.chi2;
  out.dof = fit.dof();
  return out;
}

InputFlux input_photon_flux(const DispersiveParams& p, const Eigen::Matrix3d& covariance) {
  if (!(p.kappa_hz > p.kappa_l_hz)) throw std::domain_error("input_photon_flux: kappa must exceed kappa_l");
  const auto flux_of = [&](double kappa, double eps) {
    const double net = kappa - p.kappa_l_hz;
    return 2.0 * c::pi * kappa * eps * eps / (net * net);
  };
  InputFlux out;
  out.flux.value = flux_of(p.kappa_hz, p.epsilon_hz);
  const double net = p.kappa_hz - p.kappa_l_hz;
  Eigen::Vector3d grad;
  grad << out.flux.value * (1.0 / p.kappa_hz - 2.0 / net), 0.0, 2.0 * out.flux.value / p.epsilon_hz;
  if (p.epsilon_hz == 0.0) grad(2) = 0.0;
  out.flux.sigma = std::sqrt(std::max(grad.dot(covariance * grad), 0.0));
  const double quantum = c::planck * p.omega0_hz;
  out.power = {out.flux.value * quantum, out.flux.sigma * quantum};
  return out;
}

Measured operational_efficiency(Measured excess_rate, Measured flux) {
  if (!(flux.value > 0.0)) throw std::domain_error("operational_efficiency: flux must be positive");
  Measured eta;
  eta.value = excess_rate.value / flux.value;
  const double rel_flux = flux.sigma / flux.value;
  eta.sigma = std::sqrt(std::pow(excess_rate.sigma / flux.value, 2) + std::pow(eta.value * rel_flux, 2));
  return eta;
}

Measured operational_efficiency(double rate_on, double rate_off, Measured flux, double duration_s) {
  if (!(duration_s > 0.0)) throw std::invalid_argument("operational_efficiency: duration must be positive");
  if (rate_on < rate_off) throw std::invalid_argument("operational_efficiency: rate_on below rate_off");
  const Measured excess{rate_on - rate_off, std::sqrt((rate_on + rate_off) / duration_s)};
  return operational_efficiency(excess, flux);
}

}  // namespace haloscope
