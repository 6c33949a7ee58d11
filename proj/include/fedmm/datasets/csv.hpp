#pragma once

#include <cerrno>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fedmm/core/dataset.hpp"
#include "fedmm/core/errors.hpp"

namespace fedmm::datasets {

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_cell(const std::string& raw, std::size_t line) {
  const std::string cell = trim(raw);
  if (cell.empty()) throw ParseError("empty cell", line);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size()) throw ParseError("non-numeric cell '" + cell + "'", line);
  if (errno == ERANGE && (v == HUGE_VAL || v == -HUGE_VAL)) throw ParseError("value out of range '" + cell + "'", line);
  return v;
}

}  // namespace detail

/// Dense numeric CSV, one datum per line. Blank lines are skipped.
inline Dataset parse_matrix_csv(std::istream& in, bool header = false, const std::string& provenance = "csv") {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (header && lineno == 1) continue;
    if (detail::trim(line).empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(detail::parse_cell(cell, lineno));
    if (!line.empty() && detail::trim(line).back() == ',') throw ParseError("empty cell", lineno);
    if (rows.empty()) {
      width = row.size();
    } else if (row.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " columns, found " + std::to_string(row.size()), lineno);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no data rows", lineno == 0 ? 1 : lineno);
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  try {
    return Dataset(std::move(m), provenance);
  } catch (const DomainError& e) {
    throw ParseError(e.what(), 0);
  }
}

inline Dataset load_matrix_csv(const std::string& path, bool header = false) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_matrix_csv(in, header, path);
}

inline void write_matrix_csv(std::ostream& out, const Dataset& d) {
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    for (Eigen::Index j = 0; j < d.dim(); ++j) {
      if (j) out << ',';
      out << format_double(d.row(i)[j]);
    }
    out << '\n';
  }
}

inline void save_matrix_csv(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_matrix_csv(out, d);
}

}  // namespace fedmm::datasets
