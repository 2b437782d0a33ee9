#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tnd/data.hpp"
#include "tnd/glm.hpp"
#include "tnd/types.hpp"

namespace tnd {

// Adjustment set for the comparison estimators: covariate main effects plus
// optional pairwise interactions.
struct CovariateSpec {
  std::vector<std::string> main_effects;
  std::vector<std::pair<std::string, std::string>> interactions;
};

struct ComparatorResult {
  std::string method;
  double coef = 0.0;  // exposure log-OR
  double se_model = 0.0;
  double se_empirical = 0.0;
  bool converged = false;
};

// Ordinary logistic regression of Y on A plus the adjustment set, restricted
// to exposure-observed rows.
ComparatorResult fit_ordinary_mle(const Dataset& ds, const CovariateSpec& spec);

// Pseudo-likelihood logistic regression for case/noncase-by-stratum
// two-phase sampling: same regression with per-row offset
// log[n2(1,s)/n1(1,s)] - log[n2(0,s)/n1(0,s)], counts taken from the
// dataset itself. se_model is the information SE, se_empirical the sandwich.
ComparatorResult fit_pseudo_likelihood(const Dataset& ds,
                                       const CovariateSpec& spec,
                                       const std::vector<int>& strata);

// Per-row stratum ids from the cross-classification of the named covariates
// (deterministic: ids ordered by covariate value combinations).
std::vector<int> strata_from_covariates(const Dataset& ds,
                                        const std::vector<std::string>& names);

// The sampling offsets used by fit_pseudo_likelihood, exposed for testing.
Vector pseudo_likelihood_offsets(const Dataset& ds,
                                 const std::vector<int>& strata);

}  // namespace tnd
