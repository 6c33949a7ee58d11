#pragma once

// Parameter-space aggregation baseline. Each active client computes its
// oracle at theta_t, minimizes the local surrogate theta_i = T(S_i) and sends
// Quant(theta_i - theta_t). The server averages over the active set with
// renormalized weights:
//   theta_{t+1} = theta_t + sum_active (mu_i / mu_active) Quant(theta_i - theta_t),
// which is the weighted average of the theta_i when nothing is lost in
// compression. The step size only normalizes the recorded metrics.
// Divergence is part of the expected behavior and is recorded, not raised.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedmm/core/errors.hpp"
#include "fedmm/core/metrics.hpp"
#include "fedmm/core/problem.hpp"
#include "fedmm/core/rng.hpp"
#include "fedmm/federation/compression.hpp"
#include "fedmm/federation/fedmm.hpp"
#include "fedmm/federation/wire.hpp"

namespace fedmm::federation {

struct NaiveRunResult {
  double initial_objective = 0.0;
  std::vector<MetricsRecord> records;  ///< rounds 1..T
  ModelParam theta;
  std::vector<ModelParam> theta_history;  ///< theta_0..theta_T when keep_history
  std::string divergence_reason;
};

inline Layout param_layout(const ModelParam& theta) {
  return Layout{Block{theta.rows(), theta.cols(), false}};
}

template <MMProblem P>
NaiveRunResult naive_theta_run(const P& problem, const FederatedData& fd, const FedConfig& cfg,
                               const ModelParam& theta0) {
  fd.validate();
  if (!(cfg.p > 0.0 && cfg.p <= 1.0)) throw ConfigError("algorithm.p", "must lie in (0, 1]");
  NaiveRunResult out;
  ModelParam theta = theta0;
  const Layout layout = param_layout(theta);
  out.initial_objective = fleet_objective(problem, fd, theta);
  if (cfg.keep_history) out.theta_history.push_back(theta);
  std::size_t bits = 0;
  const std::size_t cadence = cfg.e_sp_cadence == 0 ? 1 : cfg.e_sp_cadence;

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    const double gamma = cfg.schedule.at(t + 1);
    MetricsRecord rec;
    rec.run_id = cfg.run_id;
    rec.t = t + 1;
    bool failed = false;
    try {
      SurrogateVector agg(layout);
      double active_weight = 0.0;
      std::size_t active = 0;
      for (std::size_t i = 0; i < fd.size(); ++i) {
        const auto id = static_cast<std::uint64_t>(i);
        if (!client_is_active(cfg, id, t)) continue;
        const SurrogateVector s_i = sample_oracle(problem, fd.clients[i], cfg.batch_size, theta, cfg.seed, id, t);
        const ModelParam theta_i = problem.t_map(s_i);
        const SurrogateVector diff(layout, (theta_i - theta).reshaped());
        Rng crng = Rng::stream(cfg.seed, {id, t, static_cast<std::uint64_t>(StreamPurpose::compression)});
        const EncodedPayload enc = cfg.compression.encode(diff, crng);
        const auto bytes = serialize_message(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t),
                                             cfg.compression, layout, enc);
        bits += 8 * bytes.size();
        const WireMessage w = deserialize_message(bytes, cfg.compression, layout);
        agg += fd.weights[i] * cfg.compression.decode(w.payload, layout);
        active_weight += fd.weights[i];
        ++active;
      }
      const ModelParam prev = theta;
      if (active_weight > 0.0) {
        agg *= 1.0 / active_weight;
        theta += agg.data().reshaped(theta.rows(), theta.cols());
      }
      rec.active_count = active;
      rec.bits_cumulative = bits;
      if (!theta.allFinite()) throw NumericOverflow("non-finite parameter", t + 1);
      rec.objective = fleet_objective(problem, fd, theta);
      rec.e_p = metric_e_p(theta, prev, gamma);
      if ((t + 1) % cadence == 0 || t + 1 == cfg.rounds) {
        rec.e_sp = metric_e_sp(fleet_sbar(problem, fd, theta), fleet_sbar(problem, fd, prev), gamma);
      }
    } catch (const Error& e) {
      failed = true;
      out.divergence_reason = e.what();
    }
    if (cfg.keep_history && !failed) out.theta_history.push_back(theta);
    if (failed) {
      if (out.records.empty()) {
        rec.objective = out.initial_objective;
        rec.bits_cumulative = bits;
        out.records.push_back(rec);
      }
      freeze_tail(out.records, cfg.rounds);
      break;
    }
    out.records.push_back(std::move(rec));
    if (record_diverged(out.records.back())) {
      out.divergence_reason = "metric exceeded the divergence threshold at round " + std::to_string(t + 1);
      freeze_tail(out.records, cfg.rounds);
      break;
    }
  }
  out.theta = theta;
  return out;
}

}  // namespace fedmm::federation
