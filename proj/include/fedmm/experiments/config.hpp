#pragma once

// Declarative run configuration (JSON). Schema, with defaults:
//
// {
//   "problem":   {"kind": "dictionary", "K": 15, "lambda": 0.1, "eta": 0.2,
//                 "lasso": {"max_iter": 10000, "kkt_tol": 1e-8}}
//              | {"kind": "remark1", "s_floor": 1e-12}
//              | {"kind": "gmm", "lambda": 0.1, "sigma": 1.0, "weights": <dataset weights>}
//              | {"kind": "poisson", "lambda": 1.0, "latent_atoms": [0], "latent_weights": [1],
//                 "M": 1000, "inner_samples": 0}
//              | {"kind": "quadratic", "rho": <1/L>, "reg": {"kind": "none"|"l1"|"box", ...}},
//   "dataset":   {"source": "synthetic-dict", "p": 20, "tot": 400, "sparsity": 0.2}
//              | {"source": "csv", "path": "...", "header": false}
//              | {"source": "remark1", "client_means": [1, 4], "weights": [0.5, 0.5]}
//              | {"source": "gmm", "p": 2, "weights": [0.5, 0.5], "separation": 3, "sigma": 1, "tot": 200}
//              | {"source": "poisson", "theta": 0.5, "latent_atoms": [0], "latent_weights": [1], "tot": 200}
//              | {"source": "linear", "d": 5, "tot": 200, "noise": 0.1},
//   "split":     {"mode": "homogeneous"|"balanced-kmeans"|"labels", "n": 1, "iters": 50},
//   "algorithm": {"name": "fedmm"|"naive-theta"|"sa-ssmm"|"deterministic-mm",
//                 "alpha": 0, "p": 1, "compression": {"kind": "identity"|"quant"|"randk", "bits": 8, "k": 1},
//                 "batch_size": 0, "schedule": {"kind": "sqrt-decay", "beta": 0.01, "beta_grid": []},
//                 "T_max": 100, "geometry": "identity"|"problem", "v_init": "zeros"|"exact-local-field",
//                 "e_sp_cadence": 10, "enforce_alpha": false},
//   "init":      {"theta": <number or nested rows>} (optional; default theta ~ N(0, 1)),
//   "repeats": 1, "seed": 0,
//   "output":    {"path": "out/run.csv", "summary": "<path stem>_summary.csv"}
// }
//
// batch_size 0 means the full local dataset. Unknown keys are rejected.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedmm/core/errors.hpp"

namespace fedmm::experiments {

using Json = nlohmann::json;

namespace detail {

inline void check_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path, "must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items()) {
    if (!ok.count(k)) throw ConfigError(path.empty() ? k : path + "." + k, "unknown key");
  }
}

inline std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

template <class T>
T get(const Json& obj, const std::string& path, const char* key, std::optional<T> def = std::nullopt) {
  const std::string full = join(path, key);
  if (!obj.contains(key)) {
    if (def) return *def;
    throw ConfigError(full, "required");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(full, "has the wrong type");
  }
}

inline std::size_t get_count(const Json& obj, const std::string& path, const char* key,
                             std::optional<std::size_t> def = std::nullopt) {
  const std::string full = join(path, key);
  if (!obj.contains(key)) {
    if (def) return *def;
    throw ConfigError(full, "required");
  }
  const Json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(full, "must be a nonnegative integer");
  return v.get<std::size_t>();
}

}  // namespace detail

struct CompressionCfg {
  std::string kind = "identity";
  unsigned bits = 8;
  std::size_t k = 1;
};

struct ScheduleCfg {
  std::string kind = "sqrt-decay";
  double beta = 0.01;
  double gamma = 1.0;
  std::vector<double> beta_grid;
};

struct AlgorithmCfg {
  std::string name = "fedmm";
  double alpha = 0.0;
  double p = 1.0;
  CompressionCfg compression;
  std::size_t batch_size = 0;
  ScheduleCfg schedule;
  std::size_t t_max = 100;
  std::string geometry = "identity";
  std::string v_init = "zeros";
  std::size_t e_sp_cadence = 10;
  bool enforce_alpha = false;
};

struct SplitCfg {
  std::string mode = "homogeneous";
  std::size_t n = 1;
  std::size_t iters = 50;
};

struct RunConfig {
  Json tree;  ///< the validated source tree (after overrides)
  Json problem;
  Json dataset;
  SplitCfg split;
  AlgorithmCfg algorithm;
  std::optional<Json> init_theta;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  std::string output_path = "fedmm_run.csv";
  std::string summary_path;

  std::string problem_kind() const { return problem.at("kind").get<std::string>(); }
  std::string dataset_source() const { return dataset.at("source").get<std::string>(); }
};

/// Default summary path: "<stem>_summary.csv" next to the long-form CSV.
inline std::string default_summary_path(const std::string& out) {
  const auto dot = out.rfind('.');
  const auto slash = out.find_last_of('/');
  const std::string stem = (dot == std::string::npos || (slash != std::string::npos && dot < slash)) ? out : out.substr(0, dot);
  return stem + "_summary.csv";
}

inline void validate_problem_section(const Json& p) {
  using detail::check_keys;
  const std::string kind = detail::get<std::string>(p, "problem", "kind");
  if (kind == "dictionary") {
    check_keys(p, "problem", {"kind", "K", "lambda", "eta", "lasso"});
    if (p.contains("lasso")) check_keys(p.at("lasso"), "problem.lasso", {"max_iter", "kkt_tol"});
  } else if (kind == "remark1") {
    check_keys(p, "problem", {"kind", "s_floor"});
  } else if (kind == "gmm") {
    check_keys(p, "problem", {"kind", "lambda", "sigma", "weights"});
  } else if (kind == "poisson") {
    check_keys(p, "problem", {"kind", "lambda", "latent_atoms", "latent_weights", "M", "inner_samples"});
  } else if (kind == "quadratic") {
    check_keys(p, "problem", {"kind", "rho", "reg"});
    if (p.contains("reg")) check_keys(p.at("reg"), "problem.reg", {"kind", "lambda", "lo", "hi"});
  } else {
    throw ConfigError("problem.kind", "unknown problem '" + kind + "'");
  }
}

inline void validate_dataset_section(const Json& d) {
  using detail::check_keys;
  const std::string src = detail::get<std::string>(d, "dataset", "source");
  if (src == "synthetic-dict") {
    check_keys(d, "dataset", {"source", "p", "tot", "sparsity"});
  } else if (src == "csv") {
    check_keys(d, "dataset", {"source", "path", "header"});
    detail::get<std::string>(d, "dataset", "path");
  } else if (src == "remark1") {
    check_keys(d, "dataset", {"source", "client_means", "weights"});
  } else if (src == "gmm") {
    check_keys(d, "dataset", {"source", "p", "weights", "separation", "sigma", "tot"});
  } else if (src == "poisson") {
    check_keys(d, "dataset", {"source", "theta", "latent_atoms", "latent_weights", "tot"});
  } else if (src == "linear") {
    check_keys(d, "dataset", {"source", "d", "tot", "noise"});
  } else {
    throw ConfigError("dataset.source", "unknown source '" + src + "'");
  }
}

/// Parses and validates the schema; problem/data compatibility is checked when
/// the instance is built.
inline RunConfig parse_config(const Json& tree) {
  using detail::check_keys;
  using detail::get;
  using detail::get_count;
  check_keys(tree, "", {"problem", "dataset", "split", "algorithm", "init", "repeats", "seed", "output"});
  RunConfig c;
  c.tree = tree;
  if (!tree.contains("problem")) throw ConfigError("problem", "required");
  if (!tree.contains("dataset")) throw ConfigError("dataset", "required");
  c.problem = tree.at("problem");
  c.dataset = tree.at("dataset");
  validate_problem_section(c.problem);
  validate_dataset_section(c.dataset);

  if (tree.contains("split")) {
    const Json& s = tree.at("split");
    check_keys(s, "split", {"mode", "n", "iters"});
    c.split.mode = get<std::string>(s, "split", "mode", c.split.mode);
    c.split.n = get_count(s, "split", "n", c.split.n);
    c.split.iters = get_count(s, "split", "iters", c.split.iters);
    if (c.split.mode != "homogeneous" && c.split.mode != "balanced-kmeans" && c.split.mode != "labels") {
      throw ConfigError("split.mode", "unknown mode '" + c.split.mode + "'");
    }
    if (c.split.n == 0) throw ConfigError("split.n", "must be >= 1");
  }

  if (tree.contains("algorithm")) {
    const Json& a = tree.at("algorithm");
    const std::string P = "algorithm";
    check_keys(a, P, {"name", "alpha", "p", "compression", "batch_size", "schedule", "T_max", "geometry", "v_init",
                      "e_sp_cadence", "enforce_alpha"});
    AlgorithmCfg& g = c.algorithm;
    g.name = get<std::string>(a, P, "name", g.name);
    if (g.name != "fedmm" && g.name != "naive-theta" && g.name != "sa-ssmm" && g.name != "deterministic-mm") {
      throw ConfigError("algorithm.name", "unknown algorithm '" + g.name + "'");
    }
    g.alpha = get<double>(a, P, "alpha", g.alpha);
    if (!(g.alpha >= 0.0)) throw ConfigError("algorithm.alpha", "must be >= 0");
    g.p = get<double>(a, P, "p", g.p);
    if (!(g.p > 0.0 && g.p <= 1.0)) throw ConfigError("algorithm.p", "must lie in (0, 1]");
    if (a.contains("compression")) {
      const Json& q = a.at("compression");
      check_keys(q, "algorithm.compression", {"kind", "bits", "k"});
      g.compression.kind = get<std::string>(q, "algorithm.compression", "kind", g.compression.kind);
      g.compression.bits = static_cast<unsigned>(get_count(q, "algorithm.compression", "bits", g.compression.bits));
      g.compression.k = get_count(q, "algorithm.compression", "k", g.compression.k);
      const std::string& k = g.compression.kind;
      if (k != "identity" && k != "quant" && k != "randk") {
        throw ConfigError("algorithm.compression.kind", "unknown codec '" + k + "'");
      }
      if (k == "quant" && (g.compression.bits < 1 || g.compression.bits > 32)) {
        throw ConfigError("algorithm.compression.bits", "must lie in [1, 32]");
      }
      if (k == "randk" && g.compression.k == 0) throw ConfigError("algorithm.compression.k", "must be >= 1");
    }
    g.batch_size = get_count(a, P, "batch_size", g.batch_size);
    if (a.contains("schedule")) {
      const Json& s = a.at("schedule");
      check_keys(s, "algorithm.schedule", {"kind", "beta", "gamma", "beta_grid"});
      g.schedule.kind = get<std::string>(s, "algorithm.schedule", "kind", g.schedule.kind);
      g.schedule.beta = get<double>(s, "algorithm.schedule", "beta", g.schedule.beta);
      g.schedule.gamma = get<double>(s, "algorithm.schedule", "gamma", g.schedule.gamma);
      g.schedule.beta_grid = get<std::vector<double>>(s, "algorithm.schedule", "beta_grid", std::vector<double>{});
      const std::string& k = g.schedule.kind;
      if (k != "sqrt-decay" && k != "constant" && k != "harmonic") {
        throw ConfigError("algorithm.schedule.kind", "unknown schedule '" + k + "'");
      }
      if (!g.schedule.beta_grid.empty() && k != "sqrt-decay") {
        throw ConfigError("algorithm.schedule.beta_grid", "only valid with the sqrt-decay schedule");
      }
    }
    g.t_max = get_count(a, P, "T_max", g.t_max);
    g.geometry = get<std::string>(a, P, "geometry", g.geometry);
    if (g.geometry != "identity" && g.geometry != "problem") {
      throw ConfigError("algorithm.geometry", "must be 'identity' or 'problem'");
    }
    g.v_init = get<std::string>(a, P, "v_init", g.v_init);
    if (g.v_init != "zeros" && g.v_init != "exact-local-field") {
      throw ConfigError("algorithm.v_init", "must be 'zeros' or 'exact-local-field'");
    }
    g.e_sp_cadence = get_count(a, P, "e_sp_cadence", g.e_sp_cadence);
    if (g.e_sp_cadence == 0) throw ConfigError("algorithm.e_sp_cadence", "must be >= 1");
    g.enforce_alpha = get<bool>(a, P, "enforce_alpha", g.enforce_alpha);
  }

  if (tree.contains("init")) {
    const Json& i = tree.at("init");
    check_keys(i, "init", {"theta"});
    if (i.contains("theta")) c.init_theta = i.at("theta");
  }
  c.repeats = get_count(tree, "", "repeats", c.repeats);
  if (c.repeats == 0) throw ConfigError("repeats", "must be >= 1");
  c.seed = get_count(tree, "", "seed", 0);
  if (tree.contains("output")) {
    const Json& o = tree.at("output");
    check_keys(o, "output", {"path", "summary"});
    c.output_path = get<std::string>(o, "output", "path", c.output_path);
    c.summary_path = get<std::string>(o, "output", "summary", std::string{});
  }
  if (c.summary_path.empty()) c.summary_path = default_summary_path(c.output_path);
  return c;
}

/// Sets a dotted key path; the value is read as JSON, falling back to a plain
/// string (so `name=fedmm` and `p=0.5` both work).
inline void apply_override(Json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json* node = &tree;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError(path, "empty path component");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    Json& next = (*node)[parts[i]];
    if (next.is_null()) next = Json::object();
    if (!next.is_object()) throw ConfigError(path, "'" + parts[i] + "' is not a section");
    node = &next;
  }
  (*node)[parts.back()] = value;
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path);
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace fedmm::experiments
