#pragma once

#include <vector>

#include "tnd/types.hpp"

namespace tnd {

struct GlmOptions {
  // Convergence: max absolute coordinate of the weighted-mean score.
  double tol = 1e-8;
  int max_iter = 100;
  // L-inf bound on coefficients (logit scale); beyond this the fit is
  // treated as separated.
  double separation_threshold = 30.0;
};

struct GlmFit {
  Vector coefficients;
  bool converged = false;
  int iterations = 0;
  double neg_log_likelihood = 0.0;
  Matrix info_matrix;  // observed information X' diag(w mu (1-mu)) X
};

// Weighted logistic regression with fixed offset, by Newton/IRLS with
// step-halving. Fitted probabilities are clipped to [1e-6, 1-1e-6]
// throughout. Throws SeparationError / ConvergenceError.
GlmFit fit_logistic(const Eigen::Ref<const Vector>& y,
                    const Eigen::Ref<const Matrix>& X,
                    const Eigen::Ref<const Vector>& offset,
                    const Eigen::Ref<const Vector>& weights,
                    const GlmOptions& options = {});

GlmFit fit_logistic(const Eigen::Ref<const Vector>& y,
                    const Eigen::Ref<const Matrix>& X,
                    const GlmOptions& options = {});

struct LassoOptions {
  int n_lambda = 50;
  double lambda_min_ratio = 1e-3;
  double kkt_tol = 1e-8;
  int max_outer = 200;
  int max_sweeps = 2000;
  double separation_threshold = 30.0;
};

struct LassoPath {
  Vector lambdas;  // descending grid
  std::vector<Vector> coefficients;
  Vector cv_deviance;  // mean cross-validated binomial deviance per lambda
  Eigen::Index selected_index = 0;
  double selected_lambda = 0.0;
  Vector selected_coefficients;
};

// L1-penalized logistic regression by coordinate descent over a log-spaced
// lambda grid from lambda_max down by lambda_min_ratio, with K-fold
// cross-validation (fold = row index mod K) selecting the minimum mean
// deviance. Columns with penalized_mask[j] == false are never penalized.
LassoPath fit_lasso_logistic(const Eigen::Ref<const Vector>& y,
                             const Eigen::Ref<const Matrix>& X,
                             const std::vector<bool>& penalized_mask, int folds,
                             const Eigen::Ref<const Vector>& offset,
                             const LassoOptions& options = {});

LassoPath fit_lasso_logistic(const Eigen::Ref<const Vector>& y,
                             const Eigen::Ref<const Matrix>& X,
                             const std::vector<bool>& penalized_mask, int folds,
                             const LassoOptions& options = {});

// Max stationarity violation of the penalized logistic objective
// (1/n) sum[log(1+e^eta) - y eta] + lambda * sum_pen |beta_j| at beta:
// unpenalized coordinates must have zero mean score, active penalized ones
// mean score equal to lambda*sign(beta_j), zero penalized ones mean score
// within [-lambda, lambda].
double lasso_kkt_violation(const Eigen::Ref<const Vector>& y,
                           const Eigen::Ref<const Matrix>& X,
                           const Eigen::Ref<const Vector>& offset,
                           const std::vector<bool>& penalized_mask,
                           double lambda,
                           const Eigen::Ref<const Vector>& beta);

}  // namespace tnd
