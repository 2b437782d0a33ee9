#pragma once

#include <vector>

#include "tnd/data.hpp"
#include "tnd/design.hpp"
#include "tnd/glm.hpp"
#include "tnd/types.hpp"

namespace tnd {

struct TmleOptions {
  int cv_folds = 10;
  bool cross_fit = false;
  int cross_fit_folds = 10;
  int max_iter = 50;
  // Stopping tolerance is max(tol_floor, se_min / (sqrt(n) log n)) with
  // se_min the smallest current coordinate standard error.
  double tol_floor = 1e-8;
  double condition_warning = 1e10;
  LassoOptions lasso;
};

// Initial plug-in fit: lasso-logistic regression of A on the unpenalized
// block [Y * f(X), 1] plus the penalized nuisance basis, restricted to
// exposure-observed rows, together with the case probability pi~(x) among
// those rows.
struct NuisanceFit {
  Vector beta_init;  // R^b
  Vector h_coeffs;   // intercept + basis coefficients of h
  Vector pi_coeffs;  // intercept + basis coefficients of pi~
  NuisanceBasis basis;
  // Per-row nuisance evaluations (cross-fitting: from the fold excluding
  // the row; otherwise from the full fit).
  Vector h_values;
  Vector pi_values;  // clipped to [1e-6, 1-1e-6]
  std::vector<int> fold_assignments;  // empty when cross-fitting is off
  double lambda_a = 0.0;   // CV-selected penalties (metadata)
  double lambda_pi = 0.0;
};

struct TargetedEstimate {
  Vector beta;  // beta(P_n*)
  Matrix cov;   // empirical EIF covariance / n
  Matrix eif;   // n x b
  std::vector<Vector> epsilon_trace;
  int iterations = 0;
  bool converged = false;
  Vector mean_eif;
  double tolerance = 0.0;  // stopping tolerance at the final check
  Matrix lambda_matrix;
  Matrix lambda_inv;
  double lambda_condition = 0.0;
  bool condition_warning = false;
  bool degenerate_variance = false;
  Vector mu1, mu0;  // final fitted mu(y=1,x_i), mu(y=0,x_i)

  Vector se() const { return cov.diagonal().cwiseSqrt(); }
};

struct OrEstimate {
  double log_or = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double odds_ratio = 1.0;
  double ve_percent = 0.0;
  double level = 0.95;
};

NuisanceFit fit_initial(const Dataset& ds, const EffectDesign& design,
                        const NuisanceBasis& basis,
                        const TmleOptions& options = {});

// H(y,x) with the conditional expectations expanded over binary Y given
// observed exposure: H(y,x) = y - pi s1 / (pi s1 + (1-pi) s0), s_y = mu_y(1-mu_y).
double clever_covariate(double y, double mu1, double mu0, double pi);
double clever_covariate(const NuisanceFit& nf, const EffectDesign& design,
                        int y, const Eigen::Ref<const Vector>& x);

struct EifResult {
  Matrix eif;  // n x b; exposure-missing rows are identically zero
  Matrix lambda_matrix;
  Matrix lambda_inv;
  double condition = 0.0;
};

// Per-row efficient influence function and scaling matrix at the given
// per-row fitted probabilities. Throws SingularError when the inverse
// scaling matrix is rank deficient.
EifResult compute_eif(const Eigen::Ref<const Vector>& beta,
                      const Eigen::Ref<const Vector>& mu1,
                      const Eigen::Ref<const Vector>& mu0,
                      const Eigen::Ref<const Vector>& pi, const Dataset& ds,
                      const Eigen::Ref<const Matrix>& f_all);

EifResult compute_eif(const NuisanceFit& nf, const Dataset& ds,
                      const EffectDesign& design);

TargetedEstimate tmle_update(const NuisanceFit& nf, const Dataset& ds,
                             const EffectDesign& design,
                             const TmleOptions& options = {});

// cov(beta-hat) = [(1/n) sum_i D_i D_i'] / n.
Matrix estimate_variance(const Eigen::Ref<const Matrix>& eif);

OrEstimate or_at_x(const TargetedEstimate& te,
                   const Eigen::Ref<const Vector>& fx, double level = 0.95);

}  // namespace tnd
