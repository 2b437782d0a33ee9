#pragma once

#include <string>
#include <vector>

#include "tnd/data.hpp"
#include "tnd/types.hpp"

namespace tnd {

// One term of the known log-OR design f(x): intercept, a covariate main
// effect, or a product of two covariates. Terms evaluate on raw covariates
// so the fitted coefficients stay interpretable.
struct EffectTerm {
  enum class Kind { Intercept, Main, Product };
  Kind kind = Kind::Intercept;
  Eigen::Index j1 = -1;
  Eigen::Index j2 = -1;
  std::string label;
};

class EffectDesign {
 public:
  Eigen::Index b() const { return static_cast<Eigen::Index>(terms_.size()); }
  const std::vector<EffectTerm>& terms() const { return terms_; }

  Vector evaluate(const Eigen::Ref<const Vector>& x) const;
  // Row-wise f(X): n x b.
  Matrix evaluate_all(const Eigen::Ref<const Matrix>& x) const;

  friend EffectDesign build_effect_design(const std::vector<std::string>& spec,
                                          const Schema& schema);

 private:
  std::vector<EffectTerm> terms_;
};

// Term spec strings: "intercept", "<covariate>", or "<cov>*<cov>".
EffectDesign build_effect_design(const std::vector<std::string>& spec,
                                 const Schema& schema);

struct BasisConfig {
  int knots_per_continuous = 10;
  int max_degree = 2;  // 1 or 2
  // Standardize continuous covariates to mean 0 / SD 1 before building
  // columns; the transform is stored so evaluation takes raw inputs.
  bool standardize = true;
};

// Flexible nuisance basis over x: main effects, optional pairwise products,
// and first-order hinges max(0, x_j - knot) with knots at equally spaced
// empirical quantiles of each continuous covariate.
class NuisanceBasis {
 public:
  Eigen::Index p() const { return static_cast<Eigen::Index>(names_.size()); }
  const std::vector<std::string>& column_names() const { return names_; }
  const std::vector<std::vector<double>>& knots() const { return knots_; }

  Vector evaluate(const Eigen::Ref<const Vector>& x_raw) const;
  Matrix evaluate_all(const Eigen::Ref<const Matrix>& x_raw) const;

  friend NuisanceBasis build_nuisance_basis(const Eigen::Ref<const Matrix>& x,
                                            const Schema& schema,
                                            const BasisConfig& config);

 private:
  Vector standardized(const Eigen::Ref<const Vector>& x_raw) const;

  Schema schema_;
  BasisConfig config_;
  Vector shift_;  // per-covariate; identity for binary columns
  Vector scale_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> products_;
  std::vector<std::vector<double>> knots_;  // per covariate, standardized scale
  std::vector<std::string> names_;
};

NuisanceBasis build_nuisance_basis(const Eigen::Ref<const Matrix>& x,
                                   const Schema& schema,
                                   const BasisConfig& config);

inline NuisanceBasis build_nuisance_basis(const Dataset& ds,
                                          const BasisConfig& config) {
  return build_nuisance_basis(ds.covariates(), ds.schema(), config);
}

}  // namespace tnd
