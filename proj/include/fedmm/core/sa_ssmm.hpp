#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "fedmm/core/errors.hpp"
#include "fedmm/core/problem.hpp"
#include "fedmm/core/schedule.hpp"

namespace fedmm {

struct SaSsmmConfig {
  std::size_t batch_size = 0;  ///< 0 = full batch
  std::size_t rounds = 1;
  std::uint64_t seed = 0;
};

struct SaSsmmPoint {
  SurrogateVector s;
  ModelParam theta;
  double gamma = 0.0;  ///< step that produced this point; 0 for the start
};

/// Centralized stochastic-approximation surrogate MM:
///   S_{t+1} = oracle at T(Ŝ_t),  Ŝ_{t+1} = Ŝ_t + gamma_{t+1} (S_{t+1} - Ŝ_t).
/// No projection: gamma in (0,1] and S convex keep every iterate in S.
/// `oracle_override`, when set, replaces the minibatch oracle (used to feed a
/// fixed oracle stream).
template <MMProblem P>
std::vector<SaSsmmPoint> sa_ssmm_run(
    const P& problem, const Dataset& data, const StepSchedule& schedule, const SaSsmmConfig& cfg,
    const SurrogateVector& s0,
    const std::function<SurrogateVector(std::size_t, const ModelParam&)>& oracle_override = {}) {
  if (cfg.rounds < 1) throw ConfigError("rounds", "must be >= 1");
  if (!problem.in_surrogate_set(s0)) throw DomainError("initial surrogate is outside S");
  std::vector<SaSsmmPoint> traj;
  traj.reserve(cfg.rounds + 1);
  traj.push_back({s0, problem.t_map(s0), 0.0});
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    const SaSsmmPoint& cur = traj.back();
    const SurrogateVector oracle =
        oracle_override ? oracle_override(t, cur.theta)
                        : sample_oracle(problem, data, cfg.batch_size, cur.theta, cfg.seed, 0, t);
    const double gamma = schedule.at(t + 1);
    SurrogateVector next = cur.s + gamma * (oracle - cur.s);
    if (!next.all_finite()) throw NumericOverflow("non-finite surrogate iterate", t + 1);
    ModelParam theta = problem.t_map(next);
    if (!theta.allFinite()) throw NumericOverflow("non-finite mirror parameter", t + 1);
    traj.push_back({std::move(next), std::move(theta), gamma});
  }
  return traj;
}

}  // namespace fedmm
