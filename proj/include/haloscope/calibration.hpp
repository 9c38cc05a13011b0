#pragma once

// Dispersive calibration of the detector input line: Stark shift and
// measurement-induced dephasing of the qubit versus drive detuning, the fit
// that extracts (kappa, chi, epsilon), the resulting photon flux and the
// operational efficiency. All rates are in Hz (rate / 2pi).

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <vector>

#include "haloscope/least_squares.hpp"

namespace haloscope {

struct DispersiveParams {
  double kappa_hz = 0.523e6;
  double kappa_l_hz = 0.0;
  double chi_hz = 3.461e6;
  double epsilon_hz = 40.9e3;
  double omega0_hz = 7.3696e9;

  void validate() const;
};

struct StarkResponse {
  double delta_omega = 0.0;  ///< frequency shift [Hz]
  double delta_gamma = 0.0;  ///< added dephasing [Hz]
};

/// Closed rational form -4 chi eps^2 / ((kappa + i chi)^2 + 4 Delta^2).
StarkResponse stark_dephasing_model(double delta_hz, const DispersiveParams& p);

/// The same response built from the coherent amplitudes,
/// -chi conj(alpha_g) alpha_e with alpha_{g,e} = eps / (kappa/2 + i(Delta -+ chi/2)).
StarkResponse stark_from_amplitudes(double delta_hz, const DispersiveParams& p);

std::complex<double> coherent_amplitude(double delta_hz, const DispersiveParams& p, bool excited);

struct RamseyObservation {
  double delta_hz = 0.0;
  double delta_omega = 0.0;
  double delta_gamma = 0.0;
  double sigma_omega = 1.0;
  double sigma_gamma = 1.0;
};

/// Evenly spaced detunings over [-span/2, span/2] with Gaussian noise of
/// `noise_hz` on both quantities.
std::vector<RamseyObservation> synthetic_observations(const DispersiveParams& p, int n_points, double span_hz,
                                                      double noise_hz, std::uint64_t seed);

struct DispersiveFit {
  DispersiveParams params;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  ///< (kappa, chi, epsilon) in Hz^2
  double chi2 = 0.0;
  int dof = 0;

  double kappa_sigma() const { return std::sqrt(covariance(0, 0)); }
  double chi_sigma() const { return std::sqrt(covariance(1, 1)); }
  double epsilon_sigma() const { return std::sqrt(covariance(2, 2)); }
};

/// Joint weighted fit of shift and dephasing. kappa_l and omega0 are copied
/// from `fixed`. Needs at least 8 detunings on both sides of zero; throws
/// FitError on non-convergence or a parameter stuck at its bound.
DispersiveFit fit_dispersive(const std::vector<RamseyObservation>& observations,
                             const DispersiveParams& fixed = {});

struct Measured {
  double value = 0.0;
  double sigma = 0.0;
};

struct InputFlux {
  Measured flux;   ///< photons/s
  Measured power;  ///< W, flux * h nu0
};

/// flux = kappa eps^2 / (kappa - kappa_l)^2 in angular units. Throws
/// std::domain_error when kappa <= kappa_l. The optional covariance is that of
/// (kappa, chi, epsilon) from fit_dispersive.
InputFlux input_photon_flux(const DispersiveParams& p, const Eigen::Matrix3d& covariance = Eigen::Matrix3d::Zero());

/// (excess click rate) / flux with uncertainties in quadrature.
Measured operational_efficiency(Measured excess_rate, Measured flux);

/// Convenience form from raw rates measured for `duration_s` each (Poisson
/// errors). Requires rate_on >= rate_off and flux > 0.
Measured operational_efficiency(double rate_on, double rate_off, Measured flux, double duration_s);

}  // namespace haloscope
