#include "tnd/glm.hpp"

#include <algorithm>
#include <cmath>

namespace tnd {

namespace {

Vector clipped_probs(const Vector& eta) {
  Vector mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    mu[i] = clip_probability(expit(eta[i]));
  }
  return mu;
}

double weighted_nll(const Vector& y, const Vector& mu, const Vector& w) {
  double nll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    nll -= w[i] * (y[i] * std::log(mu[i]) + (1.0 - y[i]) * std::log(1.0 - mu[i]));
  }
  return nll;
}

}  // namespace

GlmFit fit_logistic(const Eigen::Ref<const Vector>& y,
                    const Eigen::Ref<const Matrix>& X,
                    const Eigen::Ref<const Vector>& offset,
                    const Eigen::Ref<const Vector>& weights,
                    const GlmOptions& options) {
  const Eigen::Index n = y.size();
  const Eigen::Index p = X.cols();
  if (p < 1) throw ConfigError("fit_logistic: design matrix has no columns");
  if (X.rows() != n || offset.size() != n || weights.size() != n) {
    throw ConfigError("fit_logistic: inconsistent row counts");
  }
  const double sum_w = weights.sum();
  if (!(sum_w > 0.0)) throw ConfigError("fit_logistic: zero total weight");

  GlmFit fit;
  fit.coefficients = Vector::Zero(p);
  Vector eta = offset;
  Vector mu = clipped_probs(eta);
  double nll = weighted_nll(y, mu, weights);

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    fit.iterations = iter;
    const Vector score = X.transpose() * weights.cwiseProduct(y - mu);
    if ((score.cwiseAbs() / sum_w).maxCoeff() <= options.tol) {
      fit.converged = true;
      fit.iterations = iter - 1;
      break;
    }
    const Vector irls_w =
        weights.cwiseProduct(mu.cwiseProduct(Vector::Ones(n) - mu));
    const Matrix info = X.transpose() * irls_w.asDiagonal() * X;
    const Vector step = info.ldlt().solve(score);
    if (!step.allFinite()) {
      throw SingularError("fit_logistic: singular information matrix");
    }

    // Step-halving keeps the deviance non-increasing.
    double scale = 1.0;
    Vector beta_new, eta_new, mu_new;
    double nll_new = 0.0;
    for (int h = 0; h < 40; ++h) {
      beta_new = fit.coefficients + scale * step;
      eta_new = offset + X * beta_new;
      mu_new = clipped_probs(eta_new);
      nll_new = weighted_nll(y, mu_new, weights);
      if (nll_new <= nll + 1e-12 * std::abs(nll)) break;
      scale *= 0.5;
    }
    fit.coefficients = beta_new;
    eta = std::move(eta_new);
    mu = std::move(mu_new);
    nll = nll_new;

    if (fit.coefficients.cwiseAbs().maxCoeff() > options.separation_threshold) {
      throw SeparationError(
          "fit_logistic: separation detected (coefficient beyond " +
          std::to_string(options.separation_threshold) + " on logit scale)");
    }
  }

  if (!fit.converged) {
    throw ConvergenceError("fit_logistic: no convergence after " +
                           std::to_string(options.max_iter) + " iterations");
  }
  fit.neg_log_likelihood = nll;
  const Vector irls_w =
      weights.cwiseProduct(mu.cwiseProduct(Vector::Ones(n) - mu));
  fit.info_matrix = X.transpose() * irls_w.asDiagonal() * X;
  return fit;
}

GlmFit fit_logistic(const Eigen::Ref<const Vector>& y,
                    const Eigen::Ref<const Matrix>& X,
                    const GlmOptions& options) {
  return fit_logistic(y, X, Vector::Zero(y.size()), Vector::Ones(y.size()),
                      options);
}

double lasso_kkt_violation(const Eigen::Ref<const Vector>& y,
                           const Eigen::Ref<const Matrix>& X,
                           const Eigen::Ref<const Vector>& offset,
                           const std::vector<bool>& penalized_mask,
                           double lambda,
                           const Eigen::Ref<const Vector>& beta) {
  const auto n = static_cast<double>(y.size());
  const Vector eta = offset + X * beta;
  const Vector mu = clipped_probs(eta);
  const Vector score = X.transpose() * (y - mu) / n;
  double violation = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    double v = 0.0;
    if (!penalized_mask[static_cast<std::size_t>(j)]) {
      v = std::abs(score[j]);
    } else if (beta[j] != 0.0) {
      v = std::abs(score[j] - lambda * (beta[j] > 0.0 ? 1.0 : -1.0));
    } else {
      v = std::max(0.0, std::abs(score[j]) - lambda);
    }
    violation = std::max(violation, v);
  }
  return violation;
}

namespace {

// One penalized fit at fixed lambda: IRLS outer loop, coordinate descent on
// the weighted working response inside, warm-started from `beta`.
void lasso_fit_at_lambda(const Eigen::Ref<const Vector>& y,
                         const Eigen::Ref<const Matrix>& X,
                         const Eigen::Ref<const Vector>& offset,
                         const std::vector<bool>& penalized_mask,
                         double lambda, const LassoOptions& options,
                         Vector& beta) {
  const Eigen::Index n = y.size();
  const Eigen::Index p = X.cols();
  const auto dn = static_cast<double>(n);

  Vector eta = offset + X * beta;
  for (int outer = 0; outer < options.max_outer; ++outer) {
    if (lasso_kkt_violation(y, X, offset, penalized_mask, lambda, beta) <=
        options.kkt_tol) {
      return;
    }
    const Vector mu = clipped_probs(eta);
    const Vector w = mu.cwiseProduct(Vector::Ones(n) - mu);
    // Working response for the linear part X*beta (offset removed).
    const Vector z =
        (eta - offset) + (y - mu).cwiseQuotient(w);
    Vector col_sq(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      col_sq[j] = X.col(j).array().square().matrix().dot(w) / dn;
    }

    Vector resid = z - X * beta;
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (beta[j] != 0.0 || !penalized_mask[static_cast<std::size_t>(j)]) {
        active.push_back(j);
      }
    }

    auto update_coordinate = [&](Eigen::Index j) -> double {
      if (col_sq[j] <= 0.0) return 0.0;
      const double grad =
          X.col(j).cwiseProduct(w).dot(resid) / dn + col_sq[j] * beta[j];
      double bj = 0.0;
      if (!penalized_mask[static_cast<std::size_t>(j)]) {
        bj = grad / col_sq[j];
      } else if (grad > lambda) {
        bj = (grad - lambda) / col_sq[j];
      } else if (grad < -lambda) {
        bj = (grad + lambda) / col_sq[j];
      }
      const double delta = bj - beta[j];
      if (delta != 0.0) {
        resid -= delta * X.col(j);
        beta[j] = bj;
      }
      return std::abs(delta);
    };

    // Sweep the active set until stable, then a full sweep to admit new
    // coordinates; repeat until the full sweep changes nothing.
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
      double max_delta = 0.0;
      for (const Eigen::Index j : active) {
        max_delta = std::max(max_delta, update_coordinate(j));
      }
      if (max_delta > 1e-11) continue;
      max_delta = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        max_delta = std::max(max_delta, update_coordinate(j));
      }
      if (max_delta <= 1e-11) break;
      active.clear();
      for (Eigen::Index j = 0; j < p; ++j) {
        if (beta[j] != 0.0 || !penalized_mask[static_cast<std::size_t>(j)]) {
          active.push_back(j);
        }
      }
    }

    eta = offset + X * beta;
    if (beta.cwiseAbs().maxCoeff() > options.separation_threshold) {
      throw SeparationError("fit_lasso_logistic: separation detected");
    }
  }
  if (lasso_kkt_violation(y, X, offset, penalized_mask, lambda, beta) > 1e-6) {
    throw ConvergenceError("fit_lasso_logistic: coordinate descent stalled");
  }
}

// Coefficients for the "all penalized coordinates zero" solution: the
// offset MLE over the unpenalized block.
Vector null_solution(const Eigen::Ref<const Vector>& y,
                     const Eigen::Ref<const Matrix>& X,
                     const Eigen::Ref<const Vector>& offset,
                     const std::vector<bool>& penalized_mask) {
  std::vector<Eigen::Index> unpen;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (!penalized_mask[static_cast<std::size_t>(j)]) unpen.push_back(j);
  }
  Vector beta = Vector::Zero(X.cols());
  if (unpen.empty()) return beta;
  Matrix Xu(X.rows(), static_cast<Eigen::Index>(unpen.size()));
  for (std::size_t k = 0; k < unpen.size(); ++k) {
    Xu.col(static_cast<Eigen::Index>(k)) = X.col(unpen[k]);
  }
  const GlmFit fit =
      fit_logistic(y, Xu, offset, Vector::Ones(y.size()), GlmOptions{});
  for (std::size_t k = 0; k < unpen.size(); ++k) {
    beta[unpen[k]] = fit.coefficients[static_cast<Eigen::Index>(k)];
  }
  return beta;
}

double heldout_deviance(const Eigen::Ref<const Vector>& y,
                        const Eigen::Ref<const Matrix>& X,
                        const Eigen::Ref<const Vector>& offset,
                        const Vector& beta, const std::vector<bool>& fold_mask,
                        bool in_fold) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (fold_mask[static_cast<std::size_t>(i)] != in_fold) continue;
    const double mu =
        clip_probability(expit(offset[i] + X.row(i).dot(beta)));
    dev += -2.0 * (y[i] * std::log(mu) + (1.0 - y[i]) * std::log(1.0 - mu));
  }
  return dev;
}

}  // namespace

LassoPath fit_lasso_logistic(const Eigen::Ref<const Vector>& y,
                             const Eigen::Ref<const Matrix>& X,
                             const std::vector<bool>& penalized_mask, int folds,
                             const Eigen::Ref<const Vector>& offset,
                             const LassoOptions& options) {
  const Eigen::Index n = y.size();
  const Eigen::Index p = X.cols();
  if (static_cast<Eigen::Index>(penalized_mask.size()) != p) {
    throw ConfigError("fit_lasso_logistic: penalized_mask size mismatch");
  }
  if (folds < 2) throw ConfigError("fit_lasso_logistic: need K >= 2 folds");
  if (folds > n) throw ConfigError("fit_lasso_logistic: more folds than rows");

  LassoPath path;
  const auto dn = static_cast<double>(n);

  // lambda_max: smallest lambda zeroing every penalized coefficient, from
  // the score of the unpenalized-only fit.
  const Vector beta0 = null_solution(y, X, offset, penalized_mask);
  const Vector mu0 = clipped_probs(offset + X * beta0);
  double lambda_max = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!penalized_mask[static_cast<std::size_t>(j)]) continue;
    lambda_max = std::max(lambda_max, std::abs(X.col(j).dot(y - mu0)) / dn);
  }

  path.lambdas.resize(options.n_lambda);
  for (int l = 0; l < options.n_lambda; ++l) {
    path.lambdas[l] =
        options.n_lambda == 1
            ? lambda_max
            : lambda_max * std::pow(options.lambda_min_ratio,
                                    static_cast<double>(l) /
                                        (options.n_lambda - 1));
  }

  // Full-data path with warm starts.
  path.coefficients.reserve(static_cast<std::size_t>(options.n_lambda));
  Vector beta = beta0;
  for (int l = 0; l < options.n_lambda; ++l) {
    lasso_fit_at_lambda(y, X, offset, penalized_mask, path.lambdas[l], options,
                        beta);
    path.coefficients.push_back(beta);
  }

  // K-fold CV on the same grid; fold assignment is row index mod K.
  path.cv_deviance = Vector::Zero(options.n_lambda);
  for (int f = 0; f < folds; ++f) {
    std::vector<bool> in_fold(static_cast<std::size_t>(n));
    Eigen::Index n_train = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      in_fold[static_cast<std::size_t>(i)] = (i % folds) == f;
      if (!in_fold[static_cast<std::size_t>(i)]) ++n_train;
    }
    Matrix X_train(n_train, p);
    Vector y_train(n_train), offset_train(n_train);
    Eigen::Index t = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_fold[static_cast<std::size_t>(i)]) continue;
      X_train.row(t) = X.row(i);
      y_train[t] = y[i];
      offset_train[t] = offset[i];
      ++t;
    }
    Vector beta_f = null_solution(y_train, X_train, offset_train, penalized_mask);
    for (int l = 0; l < options.n_lambda; ++l) {
      lasso_fit_at_lambda(y_train, X_train, offset_train, penalized_mask,
                          path.lambdas[l], options, beta_f);
      path.cv_deviance[l] +=
          heldout_deviance(y, X, offset, beta_f, in_fold, true);
    }
  }
  path.cv_deviance /= dn;

  path.selected_index = 0;
  for (Eigen::Index l = 1; l < path.cv_deviance.size(); ++l) {
    if (path.cv_deviance[l] < path.cv_deviance[path.selected_index]) {
      path.selected_index = l;
    }
  }
  path.selected_lambda = path.lambdas[path.selected_index];
  path.selected_coefficients =
      path.coefficients[static_cast<std::size_t>(path.selected_index)];
  return path;
}

LassoPath fit_lasso_logistic(const Eigen::Ref<const Vector>& y,
                             const Eigen::Ref<const Matrix>& X,
                             const std::vector<bool>& penalized_mask, int folds,
                             const LassoOptions& options) {
  return fit_lasso_logistic(y, X, penalized_mask, folds,
                            Vector::Zero(y.size()), options);
}

}  // namespace tnd
