#include "tnd/design.hpp"

#include <algorithm>
#include <cmath>

namespace tnd {

namespace {

Eigen::Index lookup(const Schema& schema, const std::string& name) {
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (schema[j].name == name) return static_cast<Eigen::Index>(j);
  }
  throw ConfigError("unknown covariate '" + name + "' in effect design");
}

// Linear-interpolation empirical quantile on sorted values.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double w = pos - static_cast<double>(lo);
  return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

}  // namespace

EffectDesign build_effect_design(const std::vector<std::string>& spec,
                                 const Schema& schema) {
  if (spec.empty()) throw ConfigError("effect design has no terms");
  EffectDesign design;
  for (const auto& term : spec) {
    EffectTerm t;
    t.label = term;
    if (term == "intercept" || term == "1") {
      t.kind = EffectTerm::Kind::Intercept;
    } else if (const auto star = term.find('*'); star != std::string::npos) {
      t.kind = EffectTerm::Kind::Product;
      t.j1 = lookup(schema, term.substr(0, star));
      t.j2 = lookup(schema, term.substr(star + 1));
    } else {
      t.kind = EffectTerm::Kind::Main;
      t.j1 = lookup(schema, term);
    }
    design.terms_.push_back(std::move(t));
  }
  return design;
}

Vector EffectDesign::evaluate(const Eigen::Ref<const Vector>& x) const {
  Vector f(b());
  for (Eigen::Index k = 0; k < b(); ++k) {
    const auto& t = terms_[static_cast<std::size_t>(k)];
    switch (t.kind) {
      case EffectTerm::Kind::Intercept:
        f[k] = 1.0;
        break;
      case EffectTerm::Kind::Main:
        f[k] = x[t.j1];
        break;
      case EffectTerm::Kind::Product:
        f[k] = x[t.j1] * x[t.j2];
        break;
    }
  }
  return f;
}

Matrix EffectDesign::evaluate_all(const Eigen::Ref<const Matrix>& x) const {
  Matrix f(x.rows(), b());
  for (Eigen::Index k = 0; k < b(); ++k) {
    const auto& t = terms_[static_cast<std::size_t>(k)];
    switch (t.kind) {
      case EffectTerm::Kind::Intercept:
        f.col(k).setOnes();
        break;
      case EffectTerm::Kind::Main:
        f.col(k) = x.col(t.j1);
        break;
      case EffectTerm::Kind::Product:
        f.col(k) = x.col(t.j1).cwiseProduct(x.col(t.j2));
        break;
    }
  }
  return f;
}

NuisanceBasis build_nuisance_basis(const Eigen::Ref<const Matrix>& x,
                                   const Schema& schema,
                                   const BasisConfig& config) {
  if (config.knots_per_continuous < 0) {
    throw ConfigError("knots_per_continuous must be >= 0");
  }
  if (config.max_degree != 1 && config.max_degree != 2) {
    throw ConfigError("max_degree must be 1 or 2");
  }
  const auto r = static_cast<Eigen::Index>(schema.size());
  if (x.cols() != r) throw ConfigError("covariate matrix/schema mismatch");

  NuisanceBasis basis;
  basis.schema_ = schema;
  basis.config_ = config;
  basis.shift_ = Vector::Zero(r);
  basis.scale_ = Vector::Ones(r);
  basis.knots_.resize(static_cast<std::size_t>(r));

  for (Eigen::Index j = 0; j < r; ++j) {
    const auto& col = schema[static_cast<std::size_t>(j)];
    if (col.kind != ColumnKind::Continuous) continue;
    if (config.standardize) {
      const double mean = x.col(j).mean();
      const double var =
          (x.col(j).array() - mean).square().sum() /
          std::max<double>(1.0, static_cast<double>(x.rows() - 1));
      basis.shift_[j] = mean;
      basis.scale_[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    if (config.knots_per_continuous > 0) {
      std::vector<double> values(static_cast<std::size_t>(x.rows()));
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        values[static_cast<std::size_t>(i)] =
            (x(i, j) - basis.shift_[j]) / basis.scale_[j];
      }
      std::sort(values.begin(), values.end());
      if (values.front() == values.back()) {
        throw ConfigError("knots requested on constant covariate '" +
                          col.name + "'");
      }
      auto& knots = basis.knots_[static_cast<std::size_t>(j)];
      const int k = config.knots_per_continuous;
      for (int m = 1; m <= k; ++m) {
        knots.push_back(
            quantile_sorted(values, static_cast<double>(m) / (k + 1)));
      }
    }
  }

  for (Eigen::Index j = 0; j < r; ++j) {
    basis.names_.push_back(schema[static_cast<std::size_t>(j)].name);
  }
  if (config.max_degree == 2) {
    for (Eigen::Index j = 0; j < r; ++j) {
      for (Eigen::Index k = j + 1; k < r; ++k) {
        basis.products_.emplace_back(j, k);
        basis.names_.push_back(schema[static_cast<std::size_t>(j)].name + "*" +
                               schema[static_cast<std::size_t>(k)].name);
      }
    }
  }
  for (Eigen::Index j = 0; j < r; ++j) {
    const auto& knots = basis.knots_[static_cast<std::size_t>(j)];
    for (std::size_t m = 0; m < knots.size(); ++m) {
      basis.names_.push_back(schema[static_cast<std::size_t>(j)].name +
                             "_hinge" + std::to_string(m + 1));
    }
  }
  return basis;
}

Vector NuisanceBasis::standardized(const Eigen::Ref<const Vector>& x_raw) const {
  return (x_raw - shift_).cwiseQuotient(scale_);
}

Vector NuisanceBasis::evaluate(const Eigen::Ref<const Vector>& x_raw) const {
  const Vector z = standardized(x_raw);
  Vector out(p());
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < z.size(); ++j) out[c++] = z[j];
  for (const auto& [j, k] : products_) out[c++] = z[j] * z[k];
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    for (const double knot : knots_[static_cast<std::size_t>(j)]) {
      out[c++] = std::max(0.0, z[j] - knot);
    }
  }
  return out;
}

Matrix NuisanceBasis::evaluate_all(const Eigen::Ref<const Matrix>& x_raw) const {
  Matrix out(x_raw.rows(), p());
  for (Eigen::Index i = 0; i < x_raw.rows(); ++i) {
    out.row(i) = evaluate(x_raw.row(i).transpose()).transpose();
  }
  return out;
}

}  // namespace tnd
