#include "tnd/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace tnd {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& raw, std::size_t line_no,
                    const std::string& col) {
  const std::string s = strip(raw);
  if (s.empty()) {
    throw DataError("parse error at line " + std::to_string(line_no) +
                    ", column '" + col + "': empty cell");
  }
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size()) {
    throw DataError("parse error at line " + std::to_string(line_no) +
                    ", column '" + col + "': malformed cell '" + raw + "'");
  }
  return v;
}

int parse_binary(const std::string& raw, std::size_t line_no,
                 const std::string& col) {
  const double v = parse_double(raw, line_no, col);
  if (v != 0.0 && v != 1.0) {
    throw DataError("parse error at line " + std::to_string(line_no) +
                    ", column '" + col + "': expected 0/1, got '" + raw + "'");
  }
  return static_cast<int>(v);
}

std::string format_value(double v, ColumnKind kind) {
  if (kind == ColumnKind::Binary && (v == 0.0 || v == 1.0)) {
    return v == 0.0 ? "0" : "1";
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Dataset Dataset::from_rows(Schema schema, const std::vector<Observation>& rows) {
  if (rows.empty()) throw DataError("dataset has no rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto r = static_cast<Eigen::Index>(schema.size());

  Dataset ds;
  ds.schema_ = std::move(schema);
  ds.delta_.resize(n);
  ds.a_.resize(n);
  ds.y_.resize(n);
  ds.x_.resize(n, r);

  for (Eigen::Index i = 0; i < n; ++i) {
    const Observation& o = rows[static_cast<std::size_t>(i)];
    if (o.delta != 0 && o.delta != 1) {
      throw DataError("row " + std::to_string(i) + ": delta must be 0/1");
    }
    if (o.y != 0 && o.y != 1) {
      throw DataError("row " + std::to_string(i) + ": y must be 0/1");
    }
    if (o.a.has_value() != (o.delta == 1)) {
      throw DataError("row " + std::to_string(i) +
                      ": exposure must be present exactly when delta=1");
    }
    if (o.a && *o.a != 0 && *o.a != 1) {
      throw DataError("row " + std::to_string(i) + ": a must be 0/1");
    }
    if (o.x.size() != r) {
      throw DataError("row " + std::to_string(i) + ": expected " +
                      std::to_string(r) + " covariates, got " +
                      std::to_string(o.x.size()));
    }
    ds.delta_[i] = o.delta;
    ds.a_[i] = o.a.value_or(-1);
    ds.y_[i] = o.y;
    ds.x_.row(i) = o.x.transpose();
  }
  return ds;
}

int Dataset::exposure(Eigen::Index i) const {
  if (delta_[i] != 1) {
    throw std::logic_error("exposure read on masked row " + std::to_string(i));
  }
  return a_[i];
}

Observation Dataset::row(Eigen::Index i) const {
  Observation o;
  o.delta = delta_[i];
  if (o.delta == 1) o.a = a_[i];
  o.y = y_[i];
  o.x = x_.row(i).transpose();
  return o;
}

std::vector<Eigen::Index> Dataset::observed_indices() const {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < n(); ++i) {
    if (delta_[i] == 1) idx.push_back(i);
  }
  return idx;
}

Eigen::Index Dataset::covariate_index(const std::string& name) const {
  for (std::size_t j = 0; j < schema_.size(); ++j) {
    if (schema_[j].name == name) return static_cast<Eigen::Index>(j);
  }
  throw DataError("unknown covariate '" + name + "'");
}

Dataset load_dataset(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file '" + path + "'");
  auto header = split_csv_line(line);
  for (auto& h : header) h = strip(h);

  std::vector<std::string> expected = {"delta", "a", "y"};
  for (const auto& c : schema) expected.push_back(c.name);
  if (header != expected) {
    std::string want;
    for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
    throw DataError("schema mismatch in '" + path + "': header must be '" +
                    want + "'");
  }

  std::vector<Observation> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != expected.size()) {
      throw DataError("parse error at line " + std::to_string(line_no) +
                      ": expected " + std::to_string(expected.size()) +
                      " fields, got " + std::to_string(fields.size()));
    }
    Observation o;
    o.delta = parse_binary(fields[0], line_no, "delta");
    const std::string a_field = strip(fields[1]);
    if (!a_field.empty()) {
      const int a = parse_binary(fields[1], line_no, "a");
      if (o.delta == 0) {
        throw DataError("missingness violation at line " +
                        std::to_string(line_no) +
                        ": a present with delta=0");
      }
      o.a = a;
    } else if (o.delta == 1) {
      throw DataError("missingness violation at line " +
                      std::to_string(line_no) + ": a absent with delta=1");
    }
    o.y = parse_binary(fields[2], line_no, "y");
    o.x.resize(static_cast<Eigen::Index>(schema.size()));
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const auto& col = schema[j];
      o.x[static_cast<Eigen::Index>(j)] =
          col.kind == ColumnKind::Binary
              ? parse_binary(fields[3 + j], line_no, col.name)
              : parse_double(fields[3 + j], line_no, col.name);
    }
    rows.push_back(std::move(o));
  }

  Dataset ds = Dataset::from_rows(schema, rows);
  const ValidationReport report = validate(ds);
  if (!report.passes()) {
    throw DataError("validation failed for '" + path + "': " +
                    report.failures.front());
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "delta,a,y";
  for (const auto& c : ds.schema()) out << ',' << c.name;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    out << ds.delta(i) << ',';
    if (ds.delta(i) == 1) out << ds.exposure(i);
    out << ',' << ds.y(i);
    for (Eigen::Index j = 0; j < ds.n_covariates(); ++j) {
      out << ','
          << format_value(ds.covariates()(i, j),
                          ds.schema()[static_cast<std::size_t>(j)].kind);
    }
    out << '\n';
  }
}

ValidationReport validate(const Dataset& ds) {
  ValidationReport report;
  const auto r = ds.n_covariates();
  report.covariate_min.assign(static_cast<std::size_t>(r),
                              std::numeric_limits<double>::infinity());
  report.covariate_max.assign(static_cast<std::size_t>(r),
                              -std::numeric_limits<double>::infinity());

  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    ++report.counts[ds.delta(i)][ds.y(i)];
    for (Eigen::Index j = 0; j < r; ++j) {
      const double v = ds.covariates()(i, j);
      const auto& col = ds.schema()[static_cast<std::size_t>(j)];
      if (!std::isfinite(v)) {
        report.failures.push_back("non-finite covariate at row " +
                                  std::to_string(i) + ", column '" + col.name +
                                  "'");
        continue;
      }
      if (col.kind == ColumnKind::Binary && v != 0.0 && v != 1.0) {
        report.failures.push_back("non-binary value at row " +
                                  std::to_string(i) + ", column '" + col.name +
                                  "'");
      }
      auto& lo = report.covariate_min[static_cast<std::size_t>(j)];
      auto& hi = report.covariate_max[static_cast<std::size_t>(j)];
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }

  if (report.counts[1][1] == 0) {
    report.failures.emplace_back("no observed-exposure cases (delta=1, y=1)");
  }
  if (report.counts[1][0] == 0) {
    report.failures.emplace_back(
        "no observed-exposure noncases (delta=1, y=0)");
  }
  return report;
}

Schema infer_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file '" + path + "'");
  auto header = split_csv_line(line);
  for (auto& h : header) h = strip(h);
  if (header.size() < 3 || header[0] != "delta" || header[1] != "a" ||
      header[2] != "y") {
    throw DataError("header of '" + path + "' must start with 'delta,a,y'");
  }

  Schema schema;
  for (std::size_t j = 3; j < header.size(); ++j) {
    schema.push_back({header[j], ColumnKind::Binary});
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) continue;  // load_dataset reports this
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const double v = parse_double(fields[3 + j], line_no, schema[j].name);
      if (v != 0.0 && v != 1.0) schema[j].kind = ColumnKind::Continuous;
    }
  }
  return schema;
}

}  // namespace tnd
