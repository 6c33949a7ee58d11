#pragma once

// Federated surrogate-space MM with control variates, unbiased compression
// and partial participation.
//
// Round t (gamma = gamma_{t+1}), every client i independently with prob. p:
//   S_i   = minibatch oracle at theta_t = T(Ŝ_t)
//   Δ_i   = S_i - Ŝ_t - V_i
//   q_i   = (1/p) Quant(Δ_i)            sent over the wire
//   V_i  += alpha q_i
// Server:
//   H     = V + sum_active mu_i q_i
//   Ŝ     = Proj_S(Ŝ + gamma H)
//   V    += alpha sum_active mu_i q_i
// The server decodes the very bytes the client encoded, so both sides see the
// same Quant realization and V = sum mu_i V_i holds up to rounding.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedmm/core/errors.hpp"
#include "fedmm/core/metrics.hpp"
#include "fedmm/core/problem.hpp"
#include "fedmm/core/rng.hpp"
#include "fedmm/core/schedule.hpp"
#include "fedmm/federation/compression.hpp"
#include "fedmm/federation/federated_data.hpp"
#include "fedmm/federation/wire.hpp"

namespace fedmm::federation {

enum class VInit { zeros, exact_local_field };

struct FedConfig {
  double alpha = 0.0;
  double p = 1.0;
  CompressionOperator compression = CompressionOperator::identity();
  std::size_t batch_size = 0;  ///< 0 = full local batch
  StepSchedule schedule = StepSchedule::harmonic();
  std::size_t rounds = 0;
  Geometry geometry = Geometry::identity;
  VInit v_init = VInit::zeros;
  bool enforce_alpha = false;
  std::uint64_t seed = 0;
  std::size_t e_sp_cadence = 10;  ///< parameter-space runs only
  bool keep_history = false;
  std::string run_id;
};

struct ClientState {
  std::uint32_t id = 0;
  SurrogateVector v;
};

struct ServerState {
  SurrogateVector s_hat;
  ModelParam theta;
  SurrogateVector v;
  std::size_t t = 0;
  std::size_t bits = 0;
};

/// What the server receives from one client in one round.
struct ClientMessage {
  std::uint32_t client = 0;
  bool active = false;
  std::vector<std::uint8_t> bytes;  ///< serialized message, empty when inactive
  std::size_t bits = 0;             ///< 8 * bytes.size()
};

/// Checks alpha against 1/(1 + omega_p); returns a warning text or throws
/// when enforcement is on.
inline std::optional<std::string> check_alpha(const FedConfig& cfg, const Layout& layout) {
  const double wp = omega_p(cfg.compression.omega(layout), cfg.p);
  const double cap = 1.0 / (1.0 + wp);
  if (cfg.alpha < 0.0) throw ConfigError("algorithm.alpha", "must be >= 0");
  if (cfg.alpha <= cap) return std::nullopt;
  const std::string msg = "alpha = " + std::to_string(cfg.alpha) + " exceeds 1/(1+omega_p) = " + std::to_string(cap);
  if (cfg.enforce_alpha) throw ConfigError("algorithm.alpha", msg);
  return msg;
}

inline bool client_is_active(const FedConfig& cfg, std::uint64_t client, std::uint64_t round) {
  if (cfg.p >= 1.0) return true;
  Rng r = Rng::stream(cfg.seed, {client, round, static_cast<std::uint64_t>(StreamPurpose::participation)});
  return r.bernoulli(cfg.p);
}

/// Decoded (1/p) Quant(Δ) carried by a message.
inline SurrogateVector decode_message(const ClientMessage& m, const FedConfig& cfg, const Layout& layout) {
  const WireMessage w = deserialize_message(m.bytes, cfg.compression, layout);
  if (w.client != m.client) throw DomainError("wire message client id mismatch");
  SurrogateVector q = cfg.compression.decode(w.payload, layout);
  q *= 1.0 / cfg.p;
  return q;
}

/// One client's share of round `round`. Updates the client's control variate
/// when it participates.
template <MMProblem P>
ClientMessage client_round(const P& problem, ClientState& client, const Dataset& data,
                           const SurrogateVector& s_hat, const ModelParam& theta, const FedConfig& cfg,
                           std::size_t round) {
  ClientMessage msg;
  msg.client = client.id;
  if (!client_is_active(cfg, client.id, round)) return msg;
  msg.active = true;
  SurrogateVector s_i;
  try {
    s_i = sample_oracle(problem, data, cfg.batch_size, theta, cfg.seed, client.id, round);
  } catch (const SolverDivergence& e) {
    throw SolverDivergence("client " + std::to_string(client.id) + ": " + e.what(), e.iterations(), e.residual());
  }
  const SurrogateVector delta = (s_i - s_hat) - client.v;
  Rng crng = Rng::stream(cfg.seed, {client.id, round, static_cast<std::uint64_t>(StreamPurpose::compression)});
  const EncodedPayload enc = cfg.compression.encode(delta, crng);
  msg.bytes = serialize_message(client.id, static_cast<std::uint32_t>(round), cfg.compression, delta.layout(), enc);
  msg.bits = 8 * msg.bytes.size();
  if (cfg.alpha != 0.0) {
    SurrogateVector q = cfg.compression.decode(enc, delta.layout());
    q *= 1.0 / cfg.p;
    client.v += cfg.alpha * q;
  }
  return msg;
}

/// Aggregates the round's messages, takes the projected SA step and updates
/// V. Returns H_{t+1}.
template <MMProblem P>
SurrogateVector server_round(const P& problem, ServerState& server, const std::vector<ClientMessage>& msgs,
                             const std::vector<double>& weights, const FedConfig& cfg, double gamma) {
  const Layout& layout = server.s_hat.layout();
  SurrogateVector agg(layout);
  for (const ClientMessage& m : msgs) {
    if (!m.active) continue;
    agg += weights.at(m.client) * decode_message(m, cfg, layout);
    server.bits += m.bits;
  }
  SurrogateVector h = server.v + agg;
  const SurrogateVector half = server.s_hat + gamma * h;
  server.s_hat = problem.project(half, cfg.geometry);
  if (cfg.alpha != 0.0) server.v += cfg.alpha * agg;
  server.theta = problem.t_map(server.s_hat);
  ++server.t;
  return h;
}

/// Start point and control variates for a run.
struct FedInit {
  ServerState server;
  std::vector<ClientState> clients;
};

/// theta_init ~ N(0, 1) entrywise from the init stream, s0 = calT(theta_init).
template <MMProblem P>
SurrogateVector default_initial_surrogate(const P& problem, const FederatedData& fd, std::uint64_t seed) {
  const auto [r, c] = problem.param_shape();
  Rng rng = Rng::stream(seed, {0, 0, static_cast<std::uint64_t>(StreamPurpose::init)});
  ModelParam theta(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) theta(i, j) = rng.normal();
  return fleet_sbar(problem, fd, theta);
}

template <MMProblem P>
FedInit fed_initialize(const P& problem, const FederatedData& fd, const FedConfig& cfg, const SurrogateVector& s0) {
  if (!problem.in_surrogate_set(s0)) throw DomainError("initial surrogate is outside S");
  if (!problem.supports_geometry(cfg.geometry)) throw ConfigError("algorithm.geometry", "not available for " + problem.name());
  FedInit init;
  init.server.s_hat = s0;
  init.server.theta = problem.t_map(s0);
  init.server.v = SurrogateVector(s0.layout());
  for (std::size_t i = 0; i < fd.size(); ++i) {
    ClientState c{static_cast<std::uint32_t>(i), SurrogateVector(s0.layout())};
    if (cfg.v_init == VInit::exact_local_field) {
      c.v = problem.exact_sbar(fd.clients[i], init.server.theta) - s0;
      init.server.v += fd.weights[i] * c.v;
    }
    init.clients.push_back(std::move(c));
  }
  return init;
}

struct FedRunResult {
  double initial_objective = 0.0;
  std::vector<MetricsRecord> records;  ///< rounds 1..T
  ServerState server;
  std::vector<ClientState> clients;
  std::vector<SurrogateVector> s_history;  ///< Ŝ_0..Ŝ_T when keep_history
  std::vector<ModelParam> theta_history;   ///< T(Ŝ_0)..T(Ŝ_T) when keep_history
  double max_v_gap = 0.0;                  ///< max_t ||V_t - sum mu_i V_{t,i}||
  std::vector<std::string> warnings;
};

inline double v_sum_gap(const ServerState& server, const std::vector<ClientState>& clients,
                        const std::vector<double>& weights) {
  SurrogateVector acc = SurrogateVector::zeros_like(server.v);
  for (const ClientState& c : clients) acc += weights[c.id] * c.v;
  return (server.v - acc).norm();
}

/// Marks rows from index `from` on as frozen copies of the last good row.
inline void freeze_tail(std::vector<MetricsRecord>& records, std::size_t rounds) {
  MetricsRecord last = records.back();
  last.diverged = true;
  records.back().diverged = true;
  while (records.size() < rounds) {
    last.t = records.size() + 1;
    records.push_back(last);
  }
}

template <MMProblem P>
FedRunResult fedmm_run(const P& problem, const FederatedData& fd, const FedConfig& cfg, const SurrogateVector& s0) {
  fd.validate();
  if (!(cfg.p > 0.0 && cfg.p <= 1.0)) throw ConfigError("algorithm.p", "must lie in (0, 1]");
  FedRunResult out;
  if (auto w = check_alpha(cfg, s0.layout())) out.warnings.push_back(*w);
  FedInit init = fed_initialize(problem, fd, cfg, s0);
  ServerState& server = init.server;
  std::vector<ClientState>& clients = init.clients;
  out.initial_objective = fleet_objective(problem, fd, server.theta);
  if (cfg.keep_history) {
    out.s_history.push_back(server.s_hat);
    out.theta_history.push_back(server.theta);
  }
  out.max_v_gap = v_sum_gap(server, clients, fd.weights);
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    const double gamma = cfg.schedule.at(t + 1);
    std::vector<ClientMessage> msgs;
    msgs.reserve(clients.size());
    std::size_t active = 0;
    for (ClientState& c : clients) {
      msgs.push_back(client_round(problem, c, fd.clients[c.id], server.s_hat, server.theta, cfg, t));
      active += msgs.back().active ? 1 : 0;
    }
    const SurrogateVector prev_s = server.s_hat;
    const ModelParam prev_theta = server.theta;
    server_round(problem, server, msgs, fd.weights, cfg, gamma);
    if (!server.s_hat.all_finite() || !server.v.all_finite()) {
      throw NumericOverflow("non-finite server state", t + 1);
    }
    if (!server.theta.allFinite()) throw NumericOverflow("non-finite mirror parameter", t + 1);
    out.max_v_gap = std::max(out.max_v_gap, v_sum_gap(server, clients, fd.weights));

    MetricsRecord rec;
    rec.run_id = cfg.run_id;
    rec.t = t + 1;
    rec.objective = fleet_objective(problem, fd, server.theta);
    rec.e_s = metric_e_s(server.s_hat, prev_s, gamma);
    rec.e_ps = metric_e_ps(server.theta, prev_theta, gamma);
    rec.bits_cumulative = server.bits;
    rec.active_count = active;
    if (cfg.keep_history) {
      out.s_history.push_back(server.s_hat);
      out.theta_history.push_back(server.theta);
    }
    out.records.push_back(std::move(rec));
    if (record_diverged(out.records.back())) {
      freeze_tail(out.records, cfg.rounds);
      break;
    }
  }
  out.server = std::move(server);
  out.clients = std::move(clients);
  return out;
}

/// Server field H_{t+1} for one round from a frozen state with round seed
/// `seed`; nothing is mutated.
template <MMProblem P>
SurrogateVector replay_server_field(const P& problem, const FederatedData& fd, const FedConfig& cfg,
                                    const ServerState& server, const std::vector<ClientState>& clients,
                                    std::uint64_t seed) {
  FedConfig c = cfg;
  c.seed = seed;
  c.alpha = 0.0;  // V updates do not enter H
  std::vector<ClientMessage> msgs;
  for (const ClientState& cs : clients) {
    ClientState tmp = cs;
    msgs.push_back(client_round(problem, tmp, fd.clients[cs.id], server.s_hat, server.theta, c, server.t));
  }
  SurrogateVector agg(server.s_hat.layout());
  for (const ClientMessage& m : msgs) {
    if (m.active) agg += fd.weights.at(m.client) * decode_message(m, c, server.s_hat.layout());
  }
  return server.v + agg;
}

}  // namespace fedmm::federation
