#pragma once

// Damped Gauss-Newton (Levenberg-Marquardt) on weighted residual vectors.
// The residual functor returns r(x) already divided by the per-point
// standard deviation, so chi^2 = r.squaredNorm() and the returned covariance
// is (J^T J)^-1 at the optimum.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace haloscope {

class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, double chi2, int dof)
      : std::runtime_error(what + " (chi2=" + std::to_string(chi2) + ", dof=" + std::to_string(dof) + ")"),
        chi2_(chi2),
        dof_(dof) {}

  double chi2() const { return chi2_; }
  int dof() const { return dof_; }

 private:
  double chi2_;
  int dof_;
};

struct LmOptions {
  int max_iterations = 500;
  double relative_tolerance = 1e-14;  ///< on chi^2 decrease and step size
  double initial_damping = 1e-3;
};

template <typename Scalar = double>
struct LmResult {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vector params;
  Matrix covariance;
  Vector residuals;
  Scalar chi2 = 0;
  int iterations = 0;
  bool converged = false;

  int dof() const { return static_cast<int>(residuals.size() - params.size()); }
  Scalar sigma(Eigen::Index i) const { return std::sqrt(covariance(i, i)); }
};

/// Central-difference Jacobian with per-parameter absolute steps.
template <typename Fn, typename Derived, typename StepDerived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> numeric_jacobian(
    Fn&& residual, const Eigen::MatrixBase<Derived>& x, const Eigen::MatrixBase<StepDerived>& steps) {
  using Scalar = typename Derived::Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector probe = x;
  const Vector base = residual(probe);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> jac(base.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const Scalar h = steps(j);
    probe(j) = x(j) + h;
    const Vector up = residual(probe);
    probe(j) = x(j) - h;
    const Vector down = residual(probe);
    probe(j) = x(j);
    jac.col(j) = (up - down) / (Scalar(2) * h);
  }
  return jac;
}

/// Minimise ||residual(x)||^2 from `x0`. `steps` sets the finite-difference
/// step per parameter, so the caller controls parameter scaling.
template <typename Fn, typename Scalar = double>
LmResult<Scalar> levenberg_marquardt(Fn&& residual, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x0,
                                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& steps,
                                     const LmOptions& options = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  LmResult<Scalar> out;
  Vector x = x0;
  Vector r = residual(x);
  Scalar chi2 = r.squaredNorm();
  if (!std::isfinite(chi2)) throw FitError("non-finite residuals at the starting point", chi2, 0);

  Scalar lambda = options.initial_damping;
  Matrix jac = numeric_jacobian(residual, x, steps);
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const Matrix jtj = jac.transpose() * jac;
    const Vector grad = jac.transpose() * r;
    bool accepted = false;
    bool tiny_step = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Matrix damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(Scalar(1e-300));
      const Vector dx = damped.ldlt().solve(-grad);
      const Vector trial = x + dx;
      const Vector r_trial = residual(trial);
      const Scalar chi2_trial = r_trial.squaredNorm();
      if (std::isfinite(chi2_trial) && chi2_trial <= chi2) {
        const Scalar decrease = chi2 - chi2_trial;
        tiny_step = (dx.cwiseAbs().array() <= options.relative_tolerance * (x.cwiseAbs().array() + steps.array()))
                        .all() ||
                    decrease <= options.relative_tolerance * (chi2 + Scalar(1e-300));
        x = trial;
        r = r_trial;
        chi2 = chi2_trial;
        lambda = std::max(lambda * Scalar(0.2), Scalar(1e-12));
        accepted = true;
        break;
      }
      lambda *= Scalar(8);
      if (lambda > Scalar(1e16)) break;
    }
    if (!accepted || tiny_step) {
      out.converged = true;
      break;
    }
    jac = numeric_jacobian(residual, x, steps);
  }
  jac = numeric_jacobian(residual, x, steps);
  const Matrix jtj = jac.transpose() * jac;
  Eigen::FullPivLU<Matrix> lu(jtj);
  out.params = x;
  out.residuals = r;
  out.chi2 = chi2;
  out.iterations = it;
  if (lu.isInvertible()) {
    out.covariance = lu.inverse();
  } else {
    out.covariance = Matrix::Constant(x.size(), x.size(), std::numeric_limits<Scalar>::infinity());
    out.converged = false;
  }
  return out;
}

}  // namespace haloscope
