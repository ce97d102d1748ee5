#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robreg/errors.hpp"

namespace robreg::csv {

/// Shortest-safe text for a double: %.17g round-trips exactly.
inline std::string fmt(double v, int digits = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, sep)) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidSpec("csv: not a number: '" + s + "'");
  }
}

struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

/// Numeric CSV with a header row.
inline Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidSpec("csv: cannot open '" + path + "'");
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw InvalidSpec("csv: '" + path + "' is empty");
  t.header = split(line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size()) throw InvalidSpec("csv: ragged row in '" + path + "'");
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c));
    rows.push_back(std::move(row));
  }
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return t;
}

/// Regression dataset: header row, covariates first, response in the last column.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> read_dataset(const std::string& path) {
  Table t = read_table(path);
  if (t.values.cols() < 2) throw InvalidSpec("csv: dataset needs at least one covariate and a response");
  if (t.values.rows() < 1) throw InvalidSpec("csv: dataset has no rows");
  const Eigen::Index p = t.values.cols() - 1;
  return {t.values.leftCols(p), t.values.col(p)};
}

inline void write_dataset(const std::string& path, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  std::ofstream out(path);
  if (!out) throw InvalidSpec("csv: cannot write '" + path + "'");
  for (Eigen::Index j = 0; j < X.cols(); ++j) out << 'x' << (j + 1) << ',';
  out << "y\n";
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) out << fmt(X(i, j)) << ',';
    out << fmt(y[i]) << '\n';
  }
}

/// Single-column vector file with a header.
inline void write_vector(const std::string& path, const Eigen::VectorXd& v, const std::string& name = "beta") {
  std::ofstream out(path);
  if (!out) throw InvalidSpec("csv: cannot write '" + path + "'");
  out << name << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << fmt(v[i]) << '\n';
}

inline Eigen::VectorXd read_vector(const std::string& path) {
  Table t = read_table(path);
  if (t.values.cols() != 1) throw InvalidSpec("csv: vector file must have exactly one column");
  return t.values.col(0);
}

/// Square matrix without header (used for the weight matrix B).
inline Eigen::MatrixXd read_matrix_noheader(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidSpec("csv: cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    for (const auto& c : split(line)) row.push_back(parse_double(c));
    if (!rows.empty() && row.size() != rows.front().size()) throw InvalidSpec("csv: ragged matrix");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidSpec("csv: matrix file is empty");
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return M;
}

}  // namespace robreg::csv
