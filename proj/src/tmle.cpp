#include "tnd/tmle.hpp"

#include <cmath>

namespace tnd {

namespace {

struct ObservedBlocks {
  std::vector<Eigen::Index> rows;  // observed (delta=1) row indices
  Vector a;                        // exposure over observed rows
  Vector y;
};

ObservedBlocks observed_blocks(const Dataset& ds) {
  ObservedBlocks blocks;
  blocks.rows = ds.observed_indices();
  long cases = 0, noncases = 0;
  const auto m = static_cast<Eigen::Index>(blocks.rows.size());
  blocks.a.resize(m);
  blocks.y.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = blocks.rows[static_cast<std::size_t>(k)];
    blocks.a[k] = ds.exposure(i);
    blocks.y[k] = ds.y(i);
    (ds.y(i) == 1 ? cases : noncases) += 1;
  }
  if (cases == 0 || noncases == 0) {
    throw EstimationError(
        "overlap failure: need observed-exposure rows in both case strata");
  }
  return blocks;
}

// Design for the initial fit over observed rows: [y*f(x) | 1 | basis(x)].
Matrix initial_design(const ObservedBlocks& blocks,
                      const Eigen::Ref<const Matrix>& f_all,
                      const Eigen::Ref<const Matrix>& basis_all) {
  const auto m = static_cast<Eigen::Index>(blocks.rows.size());
  const Eigen::Index b = f_all.cols();
  const Eigen::Index p = basis_all.cols();
  Matrix X(m, b + 1 + p);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = blocks.rows[static_cast<std::size_t>(k)];
    X.block(k, 0, 1, b) = blocks.y[k] * f_all.row(i);
    X(k, b) = 1.0;
    X.block(k, b + 1, 1, p) = basis_all.row(i);
  }
  return X;
}

Matrix pi_design(const ObservedBlocks& blocks,
                 const Eigen::Ref<const Matrix>& basis_all) {
  const auto m = static_cast<Eigen::Index>(blocks.rows.size());
  const Eigen::Index p = basis_all.cols();
  Matrix X(m, 1 + p);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = blocks.rows[static_cast<std::size_t>(k)];
    X(k, 0) = 1.0;
    X.block(k, 1, 1, p) = basis_all.row(i);
  }
  return X;
}

std::vector<bool> penalization(Eigen::Index n_unpenalized, Eigen::Index total) {
  std::vector<bool> mask(static_cast<std::size_t>(total), true);
  for (Eigen::Index j = 0; j < n_unpenalized; ++j) {
    mask[static_cast<std::size_t>(j)] = false;
  }
  return mask;
}

Matrix subset_rows(const Eigen::Ref<const Matrix>& X,
                   const std::vector<Eigen::Index>& keep) {
  Matrix out(static_cast<Eigen::Index>(keep.size()), X.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = X.row(keep[k]);
  }
  return out;
}

Vector subset(const Eigen::Ref<const Vector>& v,
              const std::vector<Eigen::Index>& keep) {
  Vector out(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = v[keep[k]];
  }
  return out;
}

}  // namespace

NuisanceFit fit_initial(const Dataset& ds, const EffectDesign& design,
                        const NuisanceBasis& basis, const TmleOptions& options) {
  const ObservedBlocks blocks = observed_blocks(ds);
  const Eigen::Index b = design.b();
  const Eigen::Index p = basis.p();

  const Matrix f_all = design.evaluate_all(ds.covariates());
  const Matrix basis_all = basis.evaluate_all(ds.covariates());
  const Matrix X_a = initial_design(blocks, f_all, basis_all);
  const Matrix X_pi = pi_design(blocks, basis_all);
  const auto mask_a = penalization(b + 1, X_a.cols());
  const auto mask_pi = penalization(1, X_pi.cols());

  NuisanceFit nf;
  nf.basis = basis;
  const Eigen::Index n = ds.n();
  nf.h_values.resize(n);
  nf.pi_values.resize(n);

  if (!options.cross_fit) {
    const LassoPath path_a = fit_lasso_logistic(blocks.a, X_a, mask_a,
                                                options.cv_folds, options.lasso);
    const LassoPath path_pi = fit_lasso_logistic(
        blocks.y, X_pi, mask_pi, options.cv_folds, options.lasso);
    nf.beta_init = path_a.selected_coefficients.head(b);
    nf.h_coeffs = path_a.selected_coefficients.tail(1 + p);
    nf.pi_coeffs = path_pi.selected_coefficients;
    nf.lambda_a = path_a.selected_lambda;
    nf.lambda_pi = path_pi.selected_lambda;
    for (Eigen::Index i = 0; i < n; ++i) {
      nf.h_values[i] =
          nf.h_coeffs[0] + basis_all.row(i).dot(nf.h_coeffs.tail(p));
      nf.pi_values[i] = clip_probability(
          expit(nf.pi_coeffs[0] + basis_all.row(i).dot(nf.pi_coeffs.tail(p))));
    }
    return nf;
  }

  // Cross-fitting: every row's nuisance values come from the fold that
  // excludes it; the reported coefficient vectors are fold averages and the
  // targeting step downstream is global.
  const int K = options.cross_fit_folds;
  if (K < 2) throw ConfigError("cross_fit_folds must be >= 2");
  nf.fold_assignments.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    nf.fold_assignments[static_cast<std::size_t>(i)] = static_cast<int>(i % K);
  }

  nf.beta_init = Vector::Zero(b);
  nf.h_coeffs = Vector::Zero(1 + p);
  nf.pi_coeffs = Vector::Zero(1 + p);
  for (int f = 0; f < K; ++f) {
    std::vector<Eigen::Index> train;  // indices into the observed blocks
    for (std::size_t k = 0; k < blocks.rows.size(); ++k) {
      const Eigen::Index i = blocks.rows[k];
      if (nf.fold_assignments[static_cast<std::size_t>(i)] != f) {
        train.push_back(static_cast<Eigen::Index>(k));
      }
    }
    const Matrix X_a_f = subset_rows(X_a, train);
    const Matrix X_pi_f = subset_rows(X_pi, train);
    const Vector a_f = subset(blocks.a, train);
    const Vector y_f = subset(blocks.y, train);
    const LassoPath path_a =
        fit_lasso_logistic(a_f, X_a_f, mask_a, options.cv_folds, options.lasso);
    const LassoPath path_pi = fit_lasso_logistic(y_f, X_pi_f, mask_pi,
                                                 options.cv_folds, options.lasso);
    const Vector h_f = path_a.selected_coefficients.tail(1 + p);
    const Vector pi_f = path_pi.selected_coefficients;
    nf.beta_init += path_a.selected_coefficients.head(b) / K;
    nf.h_coeffs += h_f / K;
    nf.pi_coeffs += pi_f / K;
    nf.lambda_a += path_a.selected_lambda / K;
    nf.lambda_pi += path_pi.selected_lambda / K;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (nf.fold_assignments[static_cast<std::size_t>(i)] != f) continue;
      nf.h_values[i] = h_f[0] + basis_all.row(i).dot(h_f.tail(p));
      nf.pi_values[i] =
          clip_probability(expit(pi_f[0] + basis_all.row(i).dot(pi_f.tail(p))));
    }
  }
  return nf;
}

double clever_covariate(double y, double mu1, double mu0, double pi) {
  const double s1 = mu1 * (1.0 - mu1);
  const double s0 = mu0 * (1.0 - mu0);
  return y - pi * s1 / (pi * s1 + (1.0 - pi) * s0);
}

double clever_covariate(const NuisanceFit& nf, const EffectDesign& design,
                        int y, const Eigen::Ref<const Vector>& x) {
  const Vector fx = design.evaluate(x);
  const Vector bx = nf.basis.evaluate(x);
  const Eigen::Index p = nf.basis.p();
  const double h = nf.h_coeffs[0] + bx.dot(nf.h_coeffs.tail(p));
  const double pi =
      clip_probability(expit(nf.pi_coeffs[0] + bx.dot(nf.pi_coeffs.tail(p))));
  const double mu1 = clip_probability(expit(nf.beta_init.dot(fx) + h));
  const double mu0 = clip_probability(expit(h));
  return clever_covariate(static_cast<double>(y), mu1, mu0, pi);
}

EifResult compute_eif(const Eigen::Ref<const Vector>& beta,
                      const Eigen::Ref<const Vector>& mu1,
                      const Eigen::Ref<const Vector>& mu0,
                      const Eigen::Ref<const Vector>& pi, const Dataset& ds,
                      const Eigen::Ref<const Matrix>& f_all) {
  const Eigen::Index n = ds.n();
  const Eigen::Index b = f_all.cols();

  EifResult result;
  Matrix lambda_inv = Matrix::Zero(b, b);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ds.delta(i) != 1) continue;
    const double s1 = mu1[i] * (1.0 - mu1[i]);
    const double s0 = mu0[i] * (1.0 - mu0[i]);
    const double c = (1.0 - pi[i]) * pi[i] * s1 * s0 /
                     ((1.0 - pi[i]) * s0 + pi[i] * s1);
    lambda_inv.selfadjointView<Eigen::Lower>().rankUpdate(
        f_all.row(i).transpose(), c);
  }
  const Matrix lambda_inv_sym =
      Matrix(lambda_inv.selfadjointView<Eigen::Lower>()) /
      static_cast<double>(n);
  lambda_inv = lambda_inv_sym;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(lambda_inv);
  const Vector eigenvalues = eig.eigenvalues();
  if (!(eigenvalues.minCoeff() > 0.0) || !eigenvalues.allFinite()) {
    Eigen::Index deficient = 0;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (!(eigenvalues[j] > 0.0)) ++deficient;
    }
    throw SingularError("singular scaling matrix: " +
                        std::to_string(deficient) + " of " + std::to_string(b) +
                        " directions of f(X) carry no information");
  }
  result.condition = eigenvalues.maxCoeff() / eigenvalues.minCoeff();
  result.lambda_inv = lambda_inv;
  result.lambda_matrix = eig.eigenvectors() *
                         eigenvalues.cwiseInverse().asDiagonal() *
                         eig.eigenvectors().transpose();

  result.eif = Matrix::Zero(n, b);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ds.delta(i) != 1) continue;
    const double h_clever = clever_covariate(ds.y(i), mu1[i], mu0[i], pi[i]);
    const double mu_yi = ds.y(i) == 1 ? mu1[i] : mu0[i];
    const double scale = h_clever * (ds.exposure(i) - mu_yi);
    result.eif.row(i) = scale * (result.lambda_matrix * f_all.row(i).transpose()).transpose();
  }
  return result;
}

EifResult compute_eif(const NuisanceFit& nf, const Dataset& ds,
                      const EffectDesign& design) {
  const Matrix f_all = design.evaluate_all(ds.covariates());
  const Eigen::Index n = ds.n();
  Vector mu1(n), mu0(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double bf = f_all.row(i).dot(nf.beta_init);
    mu1[i] = clip_probability(expit(bf + nf.h_values[i]));
    mu0[i] = clip_probability(expit(nf.h_values[i]));
  }
  return compute_eif(nf.beta_init, mu1, mu0, nf.pi_values, ds, f_all);
}

TargetedEstimate tmle_update(const NuisanceFit& nf, const Dataset& ds,
                             const EffectDesign& design,
                             const TmleOptions& options) {
  const Eigen::Index n = ds.n();
  const Eigen::Index b = design.b();
  const Matrix f_all = design.evaluate_all(ds.covariates());
  const auto observed = ds.observed_indices();
  const auto m = static_cast<Eigen::Index>(observed.size());

  TargetedEstimate te;
  te.beta = nf.beta_init;
  // Per-row logits of mu(1,x) and mu(0,x); the fluctuation updates these
  // directly so the submodel identities hold by construction.
  Vector eta1 = f_all * te.beta + nf.h_values;
  Vector eta0 = nf.h_values;
  const Vector& pi = nf.pi_values;

  Vector a_obs(m), offset(m);
  Matrix W(m, b);

  for (int k = 1; k <= options.max_iter; ++k) {
    te.iterations = k;
    Vector mu1(n), mu0(n), h1(n), h0(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu1[i] = clip_probability(expit(eta1[i]));
      mu0[i] = clip_probability(expit(eta0[i]));
      const double shared = clever_covariate(0.0, mu1[i], mu0[i], pi[i]);
      h0[i] = shared;
      h1[i] = 1.0 + shared;
    }

    // Working-likelihood maximization: offset logistic regression of A on
    // the b columns f(x) H(y,x) over exposure-observed rows.
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::Index i = observed[static_cast<std::size_t>(j)];
      a_obs[j] = ds.exposure(i);
      const double h_yi = ds.y(i) == 1 ? h1[i] : h0[i];
      W.row(j) = h_yi * f_all.row(i);
      offset[j] = ds.y(i) == 1 ? eta1[i] : eta0[i];
    }
    const GlmFit eps_fit =
        fit_logistic(a_obs, W, offset, Vector::Ones(m), GlmOptions{});
    const Vector epsilon = eps_fit.coefficients;
    te.epsilon_trace.push_back(epsilon);

    te.beta += epsilon;
    const Vector step = f_all * epsilon;
    eta1 += step.cwiseProduct(h1);
    eta0 += step.cwiseProduct(h0);

    for (Eigen::Index i = 0; i < n; ++i) {
      mu1[i] = clip_probability(expit(eta1[i]));
      mu0[i] = clip_probability(expit(eta0[i]));
    }
    EifResult eif = compute_eif(te.beta, mu1, mu0, pi, ds, f_all);
    te.mean_eif = eif.eif.colwise().mean();
    te.cov = estimate_variance(eif.eif);
    const Vector se = te.cov.diagonal().cwiseSqrt();
    te.tolerance = std::max(options.tol_floor,
                            se.minCoeff() / (std::sqrt(static_cast<double>(n)) *
                                             std::log(static_cast<double>(n))));
    te.eif = std::move(eif.eif);
    te.lambda_matrix = std::move(eif.lambda_matrix);
    te.lambda_inv = std::move(eif.lambda_inv);
    te.lambda_condition = eif.condition;
    te.mu1 = mu1;
    te.mu0 = mu0;
    if (te.mean_eif.cwiseAbs().maxCoeff() <= te.tolerance) {
      te.converged = true;
      break;
    }
  }

  te.condition_warning = te.lambda_condition > options.condition_warning;
  te.degenerate_variance = (te.cov.diagonal().array() <= 0.0).any();
  return te;
}

Matrix estimate_variance(const Eigen::Ref<const Matrix>& eif) {
  const auto n = static_cast<double>(eif.rows());
  return (eif.transpose() * eif) / (n * n);
}

OrEstimate or_at_x(const TargetedEstimate& te,
                   const Eigen::Ref<const Vector>& fx, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ConfigError("confidence level must be in (0,1)");
  }
  OrEstimate est;
  est.level = level;
  est.log_or = te.beta.dot(fx);
  est.se = std::sqrt(fx.dot(te.cov * fx));
  const double z = normal_quantile(0.5 + level / 2.0);
  est.ci_low = est.log_or - z * est.se;
  est.ci_high = est.log_or + z * est.se;
  est.odds_ratio = std::exp(est.log_or);
  est.ve_percent = (1.0 - est.odds_ratio) * 100.0;
  return est;
}

}  // namespace tnd
