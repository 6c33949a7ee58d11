#pragma once

// Per-round diagnostics. Every metric is a squared step norm normalized by
// the step size of that round.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

#include "fedmm/core/errors.hpp"
#include "fedmm/core/surrogate.hpp"

namespace fedmm {

/// Values above this (or non-finite) mark a run as diverged.
inline constexpr double kDivergenceThreshold = 1e12;

struct MetricsRecord {
  std::string run_id;
  std::size_t t = 0;
  double objective = 0.0;
  std::optional<double> e_s;   ///< surrogate-space runs
  std::optional<double> e_ps;  ///< surrogate-space runs
  std::optional<double> e_sp;  ///< parameter-space runs, logged at a cadence
  std::optional<double> e_p;   ///< parameter-space runs
  std::size_t bits_cumulative = 0;
  std::size_t active_count = 0;
  bool diverged = false;
};

inline double normalized_step(double squared_step, double gamma) {
  if (!(gamma > 0.0)) throw DomainError("step size must be > 0");
  return squared_step / (gamma * gamma);
}

/// ||S_{t+1} - S_t||^2 / gamma^2
inline double metric_e_s(const SurrogateVector& next, const SurrogateVector& cur, double gamma) {
  return normalized_step((next - cur).squared_norm(), gamma);
}

/// ||T(S_{t+1}) - T(S_t)||^2 / gamma^2
inline double metric_e_ps(const ModelParam& next, const ModelParam& cur, double gamma) {
  return normalized_step((next - cur).squaredNorm(), gamma);
}

/// ||theta_{t+1} - theta_t||^2 / gamma^2
inline double metric_e_p(const ModelParam& next, const ModelParam& cur, double gamma) {
  return metric_e_ps(next, cur, gamma);
}

/// ||calT(theta_{t+1}) - calT(theta_t)||^2 / gamma^2, calT the full-data statistic map.
inline double metric_e_sp(const SurrogateVector& field_next, const SurrogateVector& field_cur, double gamma) {
  return metric_e_s(field_next, field_cur, gamma);
}

inline bool metric_diverged(double v) { return !std::isfinite(v) || std::abs(v) > kDivergenceThreshold; }

inline bool record_diverged(const MetricsRecord& r) {
  auto bad = [](const std::optional<double>& v) { return v && metric_diverged(*v); };
  return metric_diverged(r.objective) || bad(r.e_s) || bad(r.e_ps) || bad(r.e_sp) || bad(r.e_p);
}

}  // namespace fedmm
