#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tnd/types.hpp"

namespace tnd {

enum class ColumnKind { Binary, Continuous };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
};

using Schema = std::vector<Column>;

// One TND participant row: exposure-observed indicator, exposure (present
// iff observed), case status, covariates.
struct Observation {
  int delta = 0;
  std::optional<int> a;
  int y = 0;
  Vector x;
};

struct ValidationReport {
  // counts[delta][y]
  long counts[2][2] = {{0, 0}, {0, 0}};
  std::vector<double> covariate_min;
  std::vector<double> covariate_max;
  std::vector<std::string> failures;

  bool passes() const { return failures.empty(); }
};

// Immutable collection of observations stored columnwise. Masked exposures
// are unreadable by construction: exposure(i) requires delta(i) == 1.
class Dataset {
 public:
  static Dataset from_rows(Schema schema, const std::vector<Observation>& rows);

  Eigen::Index n() const { return delta_.size(); }
  Eigen::Index n_covariates() const {
    return static_cast<Eigen::Index>(schema_.size());
  }
  const Schema& schema() const { return schema_; }

  int delta(Eigen::Index i) const { return delta_[i]; }
  int y(Eigen::Index i) const { return y_[i]; }
  int exposure(Eigen::Index i) const;

  const IntVector& delta_vector() const { return delta_; }
  const IntVector& y_vector() const { return y_; }
  const Matrix& covariates() const { return x_; }

  Observation row(Eigen::Index i) const;
  std::vector<Eigen::Index> observed_indices() const;
  Eigen::Index covariate_index(const std::string& name) const;

 private:
  Dataset() = default;

  Schema schema_;
  IntVector delta_;
  IntVector a_;  // -1 where masked
  IntVector y_;
  Matrix x_;  // n x r
};

Dataset load_dataset(const std::string& path, const Schema& schema);
void save_dataset(const Dataset& ds, const std::string& path);
ValidationReport validate(const Dataset& ds);

// Reads the header and scans values to classify each covariate column as
// binary or continuous. Used by the CLI when no schema is declared.
Schema infer_schema(const std::string& path);

}  // namespace tnd
