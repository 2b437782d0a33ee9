#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace tnd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntVector = Eigen::VectorXi;

// Probabilities are clipped to this band everywhere a fitted probability
// enters a denominator or a log (odds-ratio boundedness).
inline constexpr double kProbClip = 1e-6;

template <typename Scalar>
Scalar expit(Scalar eta) {
  if (eta >= Scalar(0)) {
    const Scalar e = std::exp(-eta);
    return Scalar(1) / (Scalar(1) + e);
  }
  const Scalar e = std::exp(eta);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar logit(Scalar p) {
  return std::log(p / (Scalar(1) - p));
}

template <typename Scalar>
Scalar clip_probability(Scalar p) {
  if (p < Scalar(kProbClip)) return Scalar(kProbClip);
  if (p > Scalar(1) - Scalar(kProbClip)) return Scalar(1) - Scalar(kProbClip);
  return p;
}

// Standard normal quantile (Acklam's rational approximation, relative
// error < 1.2e-9; ample for Wald intervals).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double q = 0.0, r = 0.0;
  if (p < p_low) {
    q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p <= 1.0 - p_low) {
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r +
            a[5]) *
           q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  q = std::sqrt(-2.0 * std::log(1.0 - p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
           c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

// Error hierarchy; the CLI maps these onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct EstimationError : Error {
  using Error::Error;
};

struct SeparationError : EstimationError {
  using EstimationError::EstimationError;
};

struct ConvergenceError : EstimationError {
  using EstimationError::EstimationError;
};

struct SingularError : EstimationError {
  using EstimationError::EstimationError;
};

}  // namespace tnd
