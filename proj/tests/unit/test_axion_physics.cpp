#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "haloscope/axion_physics.hpp"
#include "haloscope/constants.hpp"

using namespace haloscope;

namespace {

// Independent route to the signal power: g_agg and m_a in eV, converted to SI
// at the end. g^2 rho / m^2 * (B^2 V / mu0) * C * hbar omega * Q.
double oracle_power(const HaloscopeConfig& h) {
  const double e = 1.602176634e-19;
  const double hbar_evs = 6.62607015e-34 / (2.0 * M_PI) / e;
  const double hbarc = hbar_evs * 299792458.0;
  const double alpha = 7.2973525693e-3;
  const double m_ev = 6.62607015e-34 * h.nu_c_hz / e;
  const double lambda_ev = h.lambda_mev * 1e6;
  const double g_ev = std::abs(h.g_gamma) * alpha * m_ev / (M_PI * lambda_ev * lambda_ev);
  const double rho_ev4 = h.rho_a_gev_cm3 * 1e15 * std::pow(hbarc, 3);
  const double field_ev = h.b0_tesla * h.b0_tesla * h.volume_liters * 1e-3 / 1.25663706212e-6 / e;
  const double ql = h.q0 / (1.0 + h.beta);
  const double q = ql * h.q_a / (ql + h.q_a);
  const double frac = h.antenna_fraction ? h.beta / (1.0 + h.beta) : 1.0;
  const double p_ev2 = g_ev * g_ev * rho_ev4 / (m_ev * m_ev) * field_ev * h.form_factor * m_ev * q * frac;
  return p_ev2 / hbar_evs * e;
}

HaloscopeConfig table_case(double nu_hz, double b_tesla, double g_gamma) {
  HaloscopeConfig h = HaloscopeConfig::paper_preset();
  h.nu_c_hz = nu_hz;
  h.b0_tesla = b_tesla;
  h.g_gamma = g_gamma;
  h.beta = 1.0;
  h.q0 = 4.5e5;
  h.antenna_fraction = false;
  // Same cavity length: the radius and hence the cross-section scale as 1/nu.
  h.volume_liters = 0.1 * std::pow(7.37e9 / nu_hz, 2);
  return h;
}

}  // namespace

TEST_CASE("signal power agrees with an independent SI evaluation") {
  for (const double b : {0.5, 2.0, 12.0}) {
    for (const double beta : {0.5, 1.0, 3.0}) {
      HaloscopeConfig h = HaloscopeConfig::paper_preset();
      h.b0_tesla = b;
      h.beta = beta;
      CHECK(axion_signal_power(h) == doctest::Approx(oracle_power(h)).epsilon(1e-9));
      h.antenna_fraction = false;
      CHECK(axion_signal_power(h) == doctest::Approx(oracle_power(h)).epsilon(1e-9));
    }
  }
}

TEST_CASE("photon rate is power over h nu") {
  const HaloscopeConfig h = HaloscopeConfig::paper_preset();
  CHECK(signal_photon_rate(h) == doctest::Approx(axion_signal_power(h) / (6.62607015e-34 * h.nu_c_hz)));
}

TEST_CASE("benchmark table: KSVZ rows and the DFSZ 2 T power") {
  struct Row {
    double nu, b, g, power_yw, rate;
  };
  const Row rows[] = {
      {7.37e9, 2.0, -0.97, 0.84, 0.17},
      {7.37e9, 12.0, -0.97, 30.4, 6.2},
      {10e9, 12.0, -0.97, 22.39, 3.38},
      {10e9, 12.0, 0.36, 3.11, 0.47},
  };
  for (const Row& r : rows) {
    const HaloscopeConfig h = table_case(r.nu, r.b, r.g);
    CHECK(axion_signal_power(h) / constants::yoctowatt == doctest::Approx(r.power_yw).epsilon(0.05));
    CHECK(signal_photon_rate(h) == doctest::Approx(r.rate).epsilon(0.05));
  }
  CHECK(axion_signal_power(table_case(7.37e9, 2.0, 0.36)) / constants::yoctowatt == doctest::Approx(0.11).epsilon(0.05));
  CHECK(signal_photon_rate(table_case(7.37e9, 12.0, 0.36)) == doctest::Approx(0.86).epsilon(0.05));
}

TEST_CASE("power scales with B squared and g squared") {
  const HaloscopeConfig h2 = table_case(7.37e9, 2.0, -0.97);
  const HaloscopeConfig h12 = table_case(7.37e9, 12.0, -0.97);
  CHECK(axion_signal_power(h12) / axion_signal_power(h2) == doctest::Approx(36.0).epsilon(1e-12));
  const HaloscopeConfig d2 = table_case(7.37e9, 2.0, 0.36);
  CHECK(axion_signal_power(h2) / axion_signal_power(d2) == doctest::Approx(std::pow(0.97 / 0.36, 2)).epsilon(1e-12));
  HaloscopeConfig zero = h2;
  zero.b0_tesla = 0.0;
  CHECK(axion_signal_power(zero) == 0.0);
}

TEST_CASE("practical formula reproduces its anchor point") {
  HaloscopeConfig h = HaloscopeConfig::paper_preset();
  h.volume_liters = 0.11;
  h.nu_c_hz = 7.37e9;
  h.q0 = 225000.0 * (1.0 + h.beta);
  CHECK(practical_signal_power(h) / constants::yoctowatt == doctest::Approx(0.72).epsilon(1e-9));
}

TEST_CASE("invalid haloscope configuration is rejected") {
  HaloscopeConfig h = HaloscopeConfig::paper_preset();
  h.q0 = -1.0;
  CHECK_THROWS_AS(axion_signal_power(h), std::invalid_argument);
  h = HaloscopeConfig::paper_preset();
  h.form_factor = 1.5;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h = HaloscopeConfig::paper_preset();
  h.q_loaded_stored = 1.0e5;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  h.q_loaded_stored = 2.25e5;
  CHECK_NOTHROW(h.validate());
}

TEST_CASE("thermal occupation") {
  CHECK(thermal_occupation(7.3e9, 0.020) == doctest::Approx(2.4e-8).epsilon(0.05));
  const double x = 6.62607015e-34 * 7.3e9 / (1.380649e-23 * 0.044);
  CHECK(thermal_occupation(7.3e9, 0.044) == doctest::Approx(1.0 / std::expm1(x)).epsilon(1e-12));
  // High-temperature limit kT/h nu - 1/2.
  const double t = 100.0;
  const double y = 1.380649e-23 * t / (6.62607015e-34 * 7.3e9);
  CHECK(thermal_occupation(7.3e9, t) == doctest::Approx(y - 0.5 + 1.0 / (12.0 * y)).epsilon(1e-9));
  CHECK_THROWS_AS(thermal_occupation(0.0, 0.02), std::domain_error);
  CHECK_THROWS_AS(thermal_occupation(7e9, -1.0), std::domain_error);
}

TEST_CASE("thermal occupation increases with temperature") {
  double prev = 0.0;
  for (double t = 0.01; t < 1.0; t *= 1.3) {
    const double n = thermal_occupation(7.37e9, t);
    CHECK(n > prev);
    prev = n;
  }
}

TEST_CASE("speedup of photon counting") {
  DetectorFigures det = DetectorFigures::paper_preset();
  CHECK(speedup(det, 32.75e3).r == doctest::Approx(18.2).epsilon(0.2 / 18.2));
  det.eta = 0.8;
  det.gamma_dc = 10.0;
  det.gamma_int = 10.0;
  det.dnu_a_hz = 7.3e9 / 1e6;
  const double r = speedup(det, 32.75e3).r;
  CHECK(r >= 430.0);
  CHECK(r <= 500.0);
  det.gamma_dc = 0.0;
  det.gamma_int = 0.0;
  CHECK(std::isinf(speedup(det, 32.75e3).r));
}

TEST_CASE("measurement times reproduce the target SNR") {
  const DetectorFigures det = DetectorFigures::paper_preset();
  const double p = 0.6e-24;
  for (const Detection mode : {Detection::kSql, Detection::kCounter}) {
    const double t = measurement_time(mode, p, 7.37e9, 3.0, det);
    // The counter form neglects the signal's own shot noise in the variance.
    const double snr = detection_snr(mode, p, 7.37e9, t, det);
    CHECK(snr == doctest::Approx(3.0).epsilon(mode == Detection::kSql ? 1e-12 : 0.02));
  }
  const double ratio = measurement_time(Detection::kSql, p, 7.37e9, 3.0, det) /
                       measurement_time(Detection::kCounter, p, 7.37e9, 3.0, det);
  CHECK(ratio == doctest::Approx(speedup(det, 32.75e3).r).epsilon(1e-12));
}

TEST_CASE("coupling conversions") {
  const AxionCoupling a = coupling_from_frequency(7.37e9);
  CHECK(a.mass_ev == doctest::Approx(6.62607015e-34 * 7.37e9 / 1.602176634e-19).epsilon(1e-12));
  CHECK(a.mass_ev * 1e6 == doctest::Approx(30.48).epsilon(1e-3));
  CHECK(coupling_from_frequency(10e9).mass_ev * 1e6 == doctest::Approx(41.36).epsilon(1e-3));
  const AxionCoupling b = coupling_from_mass(a.mass_ev);
  CHECK(b.frequency_hz == doctest::Approx(7.37e9).epsilon(1e-12));
  CHECK(a.f_a_gev == doctest::Approx(1e12 * 5.691e-6 / a.mass_ev).epsilon(1e-9));
  CHECK(a.g_per_g_gamma_gev == doctest::Approx(7.2973525693e-3 / (M_PI * a.f_a_gev)).epsilon(1e-12));
}

TEST_CASE("coupling for power inverts the power formula") {
  HaloscopeConfig h = HaloscopeConfig::paper_preset();
  const double g0 = std::abs(axion_photon_coupling(h));
  CHECK(coupling_for_power(h, axion_signal_power(h)) == doctest::Approx(g0).epsilon(1e-12));
  const double p = 4.0 * axion_signal_power(h);
  const double g = coupling_for_power(h, p);
  CHECK(g == doctest::Approx(2.0 * g0).epsilon(1e-12));
  h.g_gamma *= g / g0;
  CHECK(axion_signal_power(h) == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("lineshape is a normalised density that vanishes below the axion frequency") {
  const double nu_a = 7.37e9;
  for (const LineshapeWidth w : {LineshapeWidth::kVelocityDispersion, LineshapeWidth::kFwhm}) {
    const double theta = lineshape_scale_hz(nu_a, 1e6, w);
    double sum = 0.0;
    const double step = theta / 2000.0;
    for (double x = 0.5 * step; x < 40.0 * theta; x += step) sum += axion_lineshape(nu_a + x, nu_a, 1e6, w) * step;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(axion_lineshape(nu_a - 1.0, nu_a, 1e6, w) == 0.0);
  }
}

TEST_CASE("FWHM reading gives a lineshape whose half-maximum width is nu/Q") {
  const double nu_a = 7.37e9;
  const double q_a = 1e6;
  const double theta = lineshape_scale_hz(nu_a, q_a, LineshapeWidth::kFwhm);
  // Peak of sqrt(u) e^-u is at u = 1/2.
  const double peak = axion_lineshape(nu_a + 0.5 * theta, nu_a, q_a, LineshapeWidth::kFwhm);
  double lo = nu_a;
  double hi = nu_a + 0.5 * theta;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (axion_lineshape(mid, nu_a, q_a, LineshapeWidth::kFwhm) < 0.5 * peak ? lo : hi) = mid;
  }
  const double left = lo;
  lo = nu_a + 0.5 * theta;
  hi = nu_a + 50.0 * theta;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (axion_lineshape(mid, nu_a, q_a, LineshapeWidth::kFwhm) > 0.5 * peak ? lo : hi) = mid;
  }
  CHECK(lo - left == doctest::Approx(nu_a / q_a).epsilon(1e-6));
}

TEST_CASE("scan rate") {
  const HaloscopeConfig h = HaloscopeConfig::paper_preset();
  const double n_sys = 1.380649e-23 * 0.5;
  const double r = scan_rate(h, 5.0, n_sys);
  const double p = axion_signal_power(h);
  const double ql = h.q_loaded();
  CHECK(r == doctest::Approx(p * p * (ql + h.q_a) / (25.0 * n_sys * n_sys * ql)).epsilon(1e-12));
  CHECK(scan_rate(h, 2.5, n_sys) == doctest::Approx(4.0 * r).epsilon(1e-12));
  CHECK_THROWS_AS(scan_rate(h, 0.0, n_sys), std::invalid_argument);
}

TEST_CASE("detector bandwidth readings") {
  CHECK(detector_bandwidth_hz(0.7e6) == doctest::Approx(175e3));
  CHECK(detector_bandwidth_hz(0.7e6, BandwidthReading::kAngular) == doctest::Approx(2.0 * M_PI / 4.0 * 0.7e6));
  const DetectorFigures det = DetectorFigures::paper_preset();
  CHECK(det.gamma_th() == doctest::Approx(det.eta * det.dnu_det_hz * det.n_th));
  CHECK(det.n_th == doctest::Approx(thermal_occupation(7.3696e9, 0.044)).epsilon(0.01));
}
