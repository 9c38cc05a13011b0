#pragma once

// One-port cavity input-output model. Rates are given in Hz (kappa/2pi),
// detunings in Hz, times in seconds.

#include <Eigen/Dense>
#include <vector>

namespace haloscope {

struct CavityMode {
  double nu_c_hz = 7.3696e9;
  double kappa_ext_hz = 0.0;
  double kappa_int_hz = 0.0;

  double kappa_tot_hz() const { return kappa_ext_hz + kappa_int_hz; }
  double beta() const { return kappa_ext_hz / kappa_int_hz; }
  double q0() const { return nu_c_hz / kappa_int_hz; }
  double q_loaded() const { return nu_c_hz / kappa_tot_hz(); }

  void validate() const;

  static CavityMode from_quality(double nu_c_hz, double q0, double beta);
  /// Same loaded Q, coupling beta: the two readings of one absorption dip.
  static CavityMode from_loaded(double nu_c_hz, double q_loaded, double beta);
};

/// |r(delta)|^2 with r = 1 - kappa_ext / (kappa_tot/2 - i delta).
double reflection_mag2(double delta_hz, const CavityMode& mode);

/// Piecewise-constant drive amplitude (sqrt(photons/s)) at a fixed carrier
/// detuning. Segment i holds from start_s[i] to start_s[i+1] (or to
/// duration_s); the drive is zero before the first start and after
/// duration_s.
struct PulseDrive {
  double detuning_hz = 0.0;
  std::vector<double> start_s;
  std::vector<double> amplitude;
  double duration_s = 0.0;

  static PulseDrive square(double amplitude, double length_s, double detuning_hz = 0.0);
  double at(double t) const;
  void validate() const;
};

/// Largest RK4 step the integrator accepts for this mode and drive.
double max_stable_step(const CavityMode& mode, const PulseDrive& drive);

/// Reflected power |b_in - sqrt(kappa_ext) a|^2 at each time in `t_grid`
/// (non-decreasing, starting at or after t = 0 where the cavity is empty).
/// `step_s` = 0 selects the step automatically; an explicit step above
/// max_stable_step() throws std::domain_error.
Eigen::VectorXd pulse_response(const CavityMode& mode, const PulseDrive& drive, const Eigen::VectorXd& t_grid,
                               double step_s = 0.0);

struct SpectroscopyFit {
  double nu_c_hz = 0.0;
  double nu_c_sigma_hz = 0.0;
  double linewidth_hz = 0.0;  ///< full width, kappa_tot
  double linewidth_sigma_hz = 0.0;
  double depth = 0.0;  ///< 1 - |r(0)|^2
  double depth_sigma = 0.0;
  double baseline = 0.0;  ///< off-resonance counts
  double beta_over = 0.0;
  double beta_under = 0.0;  ///< 1 / beta_over
  double q_loaded = 0.0;
  double q0_over = 0.0;
  double q0_over_sigma = 0.0;
  double q0_under = 0.0;
  double q0_under_sigma = 0.0;
  double chi2 = 0.0;
  int dof = 0;
};

/// Poisson-weighted Lorentzian-dip fit of counts versus probe frequency.
/// Throws std::invalid_argument for fewer than 7 points or a span under three
/// linewidths, and FitError ("no resonance found", non-convergence).
SpectroscopyFit fit_cavity_spectroscopy(const Eigen::VectorXd& freq_hz, const Eigen::VectorXd& counts);

/// The pair of beta values producing dip depth `depth` (over, under).
std::pair<double, double> beta_pair_from_depth(double depth);

struct PulseTrace {
  Eigen::VectorXd t_s;
  Eigen::VectorXd power;
  Eigen::VectorXd sigma;
};

enum class Coupling { kOvercoupled, kUndercoupled, kAmbiguous };

struct BetaChoice {
  Coupling outcome = Coupling::kAmbiguous;
  double beta = 0.0;  ///< chosen beta, 0 when ambiguous
  double chi2_over = 0.0;
  double chi2_under = 0.0;
  double residual_ratio = 1.0;  ///< worse chi2 / better chi2
};

/// Compare the measured response with both coupling readings. Each candidate
/// gets its own best linear scale and offset; the selection requires the
/// losing chi^2 to exceed the winning one by `min_ratio`.
BetaChoice disambiguate_beta(const PulseTrace& trace, const PulseDrive& drive, const CavityMode& over,
                             const CavityMode& under, double min_ratio = 2.0);

}  // namespace haloscope
