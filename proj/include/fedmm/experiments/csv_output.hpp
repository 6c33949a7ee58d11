#pragma once

// Long-form metrics CSV and the per-round mean/std summary. Column order is
// fixed: run_id,t,objective,e_s,e_ps,e_sp,e_p,bits_cumulative,active_count,diverged.
// Missing values are empty cells. The summary holds one "mean" and one "std"
// row per round; std is the sample standard deviation (n - 1), empty when
// fewer than two repeats carry the value.

#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fedmm/core/errors.hpp"
#include "fedmm/core/metrics.hpp"
#include "fedmm/datasets/csv.hpp"

namespace fedmm::experiments {

inline constexpr const char* kCsvHeader =
    "run_id,t,objective,e_s,e_ps,e_sp,e_p,bits_cumulative,active_count,diverged";

namespace detail {

inline std::string cell(const std::optional<double>& v) { return v ? datasets::format_double(*v) : std::string{}; }

}  // namespace detail

inline void write_metrics_row(std::ostream& out, const MetricsRecord& r) {
  using datasets::format_double;
  out << r.run_id << ',' << r.t << ',' << format_double(r.objective) << ',' << detail::cell(r.e_s) << ','
      << detail::cell(r.e_ps) << ',' << detail::cell(r.e_sp) << ',' << detail::cell(r.e_p) << ','
      << r.bits_cumulative << ',' << r.active_count << ',' << (r.diverged ? 1 : 0) << '\n';
}

inline void write_metrics_csv(std::ostream& out, const std::vector<std::vector<MetricsRecord>>& runs) {
  out << kCsvHeader << '\n';
  for (const auto& run : runs)
    for (const MetricsRecord& r : run) write_metrics_row(out, r);
}

struct SummaryRow {
  std::size_t t = 0;
  std::vector<std::optional<double>> mean;  ///< objective .. diverged, 8 fields
  std::vector<std::optional<double>> std;
};

inline std::vector<std::optional<double>> record_fields(const MetricsRecord& r) {
  return {r.objective,
          r.e_s,
          r.e_ps,
          r.e_sp,
          r.e_p,
          static_cast<double>(r.bits_cumulative),
          static_cast<double>(r.active_count),
          r.diverged ? 1.0 : 0.0};
}

/// Mean and sample std across runs for every round present in any run.
inline std::vector<SummaryRow> summarize(const std::vector<std::vector<MetricsRecord>>& runs) {
  std::map<std::size_t, std::vector<std::vector<std::optional<double>>>> by_t;
  for (const auto& run : runs)
    for (const MetricsRecord& r : run) by_t[r.t].push_back(record_fields(r));
  std::vector<SummaryRow> out;
  for (const auto& [t, rows] : by_t) {
    SummaryRow s;
    s.t = t;
    for (std::size_t f = 0; f < 8; ++f) {
      std::vector<double> xs;
      for (const auto& row : rows)
        if (row[f]) xs.push_back(*row[f]);
      if (xs.empty()) {
        s.mean.emplace_back();
        s.std.emplace_back();
        continue;
      }
      // Shifted by the first sample so identical runs give exactly zero spread.
      double shift = 0.0;
      for (double x : xs) shift += x - xs[0];
      const double mean = xs[0] + shift / static_cast<double>(xs.size());
      s.mean.emplace_back(mean);
      if (xs.size() < 2) {
        s.std.emplace_back();
        continue;
      }
      double ss = 0.0;
      for (double x : xs) ss += (x - mean) * (x - mean);
      s.std.emplace_back(std::sqrt(ss / static_cast<double>(xs.size() - 1)));
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << kCsvHeader << '\n';
  for (const SummaryRow& s : rows) {
    for (int which = 0; which < 2; ++which) {
      const auto& vals = which == 0 ? s.mean : s.std;
      out << (which == 0 ? "mean" : "std") << ',' << s.t;
      for (const auto& v : vals) out << ',' << detail::cell(v);
      out << '\n';
    }
  }
}

inline void save_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed for " + path);
}

}  // namespace fedmm::experiments
