#include "haloscope/axion_physics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "haloscope/constants.hpp"
#include "haloscope/log.hpp"

namespace haloscope {

namespace c = constants;

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(name) + " must be positive and finite");
  }
}

void require_non_negative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(name) + " must be non-negative and finite");
  }
}

// Natural-unit conversions (hbar = c = 1, Heaviside-Lorentz).
double density_gev_cm3_to_ev4(double rho) {
  const double ev_per_m3 = rho * 1e9 * 1e6;
  return ev_per_m3 * std::pow(c::hbar_c_ev_m, 3);
}

// B^2 V in natural units is the field energy B^2 V / mu0 in SI.
double field_energy_joule(double b_tesla, double volume_liters) {
  return b_tesla * b_tesla * (volume_liters * 1e-3) / c::vacuum_permeability;
}

// Solve u^(1/2) e^-u = half of its maximum for the two roots; returns the
// width in units of theta.
double gamma32_fwhm_in_theta() {
  const auto f = [](double u) { return std::sqrt(u) * std::exp(-u); };
  const double half = 0.5 * f(0.5);
  const auto bisect = [&](double lo, double hi) {
    const bool rising = f(lo) < f(hi);
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if ((f(mid) < half) == rising) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };
  return bisect(0.5, 20.0) - bisect(0.0, 0.5);
}

}  // namespace

void HaloscopeConfig::validate() const {
  if (!(g_gamma != 0.0) || !std::isfinite(g_gamma)) {
    throw std::invalid_argument("g_gamma must be non-zero and finite");
  }
  require_positive(rho_a_gev_cm3, "rho_a_gev_cm3");
  require_positive(lambda_mev, "lambda_mev");
  require_non_negative(b0_tesla, "b0_tesla");
  require_positive(volume_liters, "volume_liters");
  require_positive(form_factor, "form_factor");
  if (form_factor > 1.0) throw std::invalid_argument("form_factor must be <= 1");
  require_positive(nu_c_hz, "nu_c_hz");
  require_positive(q0, "q0");
  require_positive(beta, "beta");
  require_positive(q_a, "q_a");
  if (q_loaded_stored > 0.0 && std::abs(q_loaded_stored - q_loaded()) > 1e-6 * q_loaded()) {
    throw std::invalid_argument("q_loaded disagrees with q0/(1+beta)");
  }
}

HaloscopeConfig HaloscopeConfig::paper_preset() {
  HaloscopeConfig cfg;
  cfg.g_gamma = c::g_gamma_ksvz;
  cfg.b0_tesla = 2.0;
  cfg.volume_liters = 0.1;
  cfg.form_factor = 0.64;
  cfg.nu_c_hz = 7.3696e9;
  cfg.q0 = 9.0e5;
  cfg.beta = 3.0;
  cfg.q_a = 1.0e6;
  return cfg;
}

void DetectorFigures::validate() const {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in (0, 1]");
  require_non_negative(gamma_dc, "gamma_dc");
  require_non_negative(gamma_int, "gamma_int");
  if (gamma_int > gamma_dc) throw std::invalid_argument("gamma_int exceeds gamma_dc");
  require_non_negative(n_th, "n_th");
  require_non_negative(dnu_det_hz, "dnu_det_hz");
  require_positive(dnu_a_hz, "dnu_a_hz");
}

DetectorFigures DetectorFigures::paper_preset() {
  DetectorFigures det;
  det.eta = 0.46;
  det.gamma_dc = 85.0;
  det.gamma_int = 10.0;
  det.n_th = thermal_occupation(7.3693e9, 0.044);
  det.dnu_det_hz = detector_bandwidth_hz(0.7e6);
  det.dnu_a_hz = 7.3e3;
  return det;
}

double detector_bandwidth_hz(double kappa_hz, BandwidthReading reading) {
  require_non_negative(kappa_hz, "kappa_hz");
  switch (reading) {
    case BandwidthReading::kHertz:
      return kappa_hz / 4.0;
    case BandwidthReading::kAngular:
      return 2.0 * c::pi / 4.0 * kappa_hz;
  }
  return kappa_hz / 4.0;
}

double thermal_occupation(double nu_hz, double temperature_k) {
  if (!(nu_hz > 0.0) || !(temperature_k > 0.0)) {
    throw std::domain_error("thermal_occupation: frequency and temperature must be positive");
  }
  return 1.0 / std::expm1(c::planck * nu_hz / (c::boltzmann * temperature_k));
}

double axion_signal_power(const HaloscopeConfig& cfg) {
  cfg.validate();
  const double lambda_ev = cfg.lambda_mev * 1e6;
  const double density_ratio = density_gev_cm3_to_ev4(cfg.rho_a_gev_cm3) / std::pow(lambda_ev, 4);
  const double coupling = cfg.g_gamma * cfg.g_gamma * c::fine_structure * c::fine_structure / (c::pi * c::pi);
  const double extraction = cfg.antenna_fraction ? cfg.beta / (1.0 + cfg.beta) : 1.0;
  const double omega = 2.0 * c::pi * cfg.nu_c_hz;
  const double q_l = cfg.q_loaded();
  const double q_eff = cfg.q_a * q_l / (cfg.q_a + q_l);
  return coupling * density_ratio * extraction * omega * field_energy_joule(cfg.b0_tesla, cfg.volume_liters) *
         cfg.form_factor * q_eff;
}

double signal_photon_rate(const HaloscopeConfig& cfg) {
  return axion_signal_power(cfg) / (c::planck * cfg.nu_c_hz);
}

double practical_signal_power(const HaloscopeConfig& cfg) {
  cfg.validate();
  const double g = cfg.g_gamma / 0.97;
  return 0.72 * c::yoctowatt * g * g * (cfg.rho_a_gev_cm3 / 0.45) * std::pow(cfg.b0_tesla / 2.0, 2) *
         (cfg.volume_liters / 0.11) * (cfg.nu_c_hz / 7.37e9) * (cfg.q_loaded() / 225000.0) *
         (cfg.form_factor / 0.64);
}

AxionCoupling coupling_from_mass(double mass_ev) {
  if (!(mass_ev > 0.0) || !std::isfinite(mass_ev)) {
    throw std::domain_error("axion mass must be positive");
  }
  AxionCoupling out;
  out.mass_ev = mass_ev;
  out.frequency_hz = mass_ev * c::elementary_charge / c::planck;
  out.f_a_gev = 1e12 * c::axion_mass_at_fa_1e12_ev / mass_ev;
  out.g_per_g_gamma_gev = c::fine_structure / (c::pi * out.f_a_gev);
  return out;
}

AxionCoupling coupling_from_frequency(double nu_hz) {
  if (!(nu_hz > 0.0) || !std::isfinite(nu_hz)) {
    throw std::domain_error("axion frequency must be positive");
  }
  return coupling_from_mass(c::planck * nu_hz / c::elementary_charge);
}

double axion_photon_coupling(const HaloscopeConfig& cfg) {
  const double mass_gev = c::planck * cfg.nu_c_hz / c::elementary_charge * 1e-9;
  const double lambda_gev = cfg.lambda_mev * 1e-3;
  return cfg.g_gamma * c::fine_structure * mass_gev / (c::pi * lambda_gev * lambda_gev);
}

double coupling_for_power(const HaloscopeConfig& cfg, double power_w) {
  require_non_negative(power_w, "power_w");
  const double reference = axion_signal_power(cfg);
  if (!(reference > 0.0)) throw std::domain_error("coupling_for_power: configuration yields zero power");
  return std::abs(axion_photon_coupling(cfg)) * std::sqrt(power_w / reference);
}

double lineshape_scale_hz(double nu_a_hz, double q_a, LineshapeWidth width) {
  require_positive(nu_a_hz, "nu_a_hz");
  require_positive(q_a, "q_a");
  const double characteristic = nu_a_hz / q_a;
  switch (width) {
    case LineshapeWidth::kVelocityDispersion:
      return characteristic / 3.0;
    case LineshapeWidth::kFwhm: {
      static const double fwhm_theta = gamma32_fwhm_in_theta();
      return characteristic / fwhm_theta;
    }
  }
  return characteristic / 3.0;
}

double axion_lineshape(double nu_hz, double nu_a_hz, double q_a, LineshapeWidth width) {
  const double theta = lineshape_scale_hz(nu_a_hz, q_a, width);
  const double x = nu_hz - nu_a_hz;
  if (x <= 0.0) return 0.0;
  return 2.0 / std::sqrt(c::pi) * std::sqrt(x) / std::pow(theta, 1.5) * std::exp(-x / theta);
}

double scan_rate(const HaloscopeConfig& cfg, double snr_target, double n_sys_joule) {
  require_positive(snr_target, "snr_target");
  require_positive(n_sys_joule, "n_sys_joule");
  const double p = axion_signal_power(cfg);
  const double q_l = cfg.q_loaded();
  return p * p * (q_l + cfg.q_a) / (snr_target * snr_target * n_sys_joule * n_sys_joule * q_l);
}

double detection_snr(Detection mode, double power_w, double nu_a_hz, double t_s, const DetectorFigures& det) {
  require_positive(t_s, "t_s");
  require_positive(nu_a_hz, "nu_a_hz");
  require_non_negative(power_w, "power_w");
  const double photon_rate = power_w / (c::planck * nu_a_hz);
  if (mode == Detection::kSql) {
    return photon_rate * std::sqrt(t_s / det.dnu_a_hz);
  }
  const double detected = det.eta * photon_rate * t_s;
  const double variance = det.gamma_dc * t_s + detected;
  return variance > 0.0 ? detected / std::sqrt(variance) : 0.0;
}

double measurement_time(Detection mode, double power_w, double nu_a_hz, double snr_target, const DetectorFigures& det) {
  require_positive(power_w, "power_w");
  require_positive(nu_a_hz, "nu_a_hz");
  require_positive(snr_target, "snr_target");
  const double ratio = c::planck * nu_a_hz * snr_target / power_w;
  if (mode == Detection::kSql) return det.dnu_a_hz * ratio * ratio;
  return det.gamma_dc / (det.eta * det.eta) * ratio * ratio;
}

Speedup speedup(const DetectorFigures& det, double dnu_c_hz) {
  det.validate();
  Speedup out;
  if (det.gamma_dc == 0.0) {
    log::warn("speedup: zero dark-count rate, gain is unbounded");
    out.r = std::numeric_limits<double>::infinity();
  } else {
    out.r = det.eta * det.eta * det.dnu_a_hz / det.gamma_dc;
  }
  const double thermal_denominator = det.n_th * dnu_c_hz;
  out.r_thermal = thermal_denominator > 0.0 ? det.eta * det.dnu_a_hz / thermal_denominator
                                            : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace haloscope
