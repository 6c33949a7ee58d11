#pragma once

// Builds a problem instance from a RunConfig and runs the configured
// algorithm over independent repeats. Repeat r uses seed derive_seed(seed, {r,
// repeat}); the data and the split depend on the master seed only, so all
// repeats share one instance.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "fedmm/core/metrics.hpp"
#include "fedmm/core/problem.hpp"
#include "fedmm/core/rng.hpp"
#include "fedmm/core/sa_ssmm.hpp"
#include "fedmm/core/schedule.hpp"
#include "fedmm/datasets/csv.hpp"
#include "fedmm/datasets/partition.hpp"
#include "fedmm/datasets/synthetic.hpp"
#include "fedmm/experiments/config.hpp"
#include "fedmm/experiments/csv_output.hpp"
#include "fedmm/federation/compression.hpp"
#include "fedmm/federation/fedmm.hpp"
#include "fedmm/federation/naive.hpp"
#include "fedmm/problems/dictionary.hpp"
#include "fedmm/problems/gmm_em.hpp"
#include "fedmm/problems/poisson_em.hpp"
#include "fedmm/problems/quadratic.hpp"
#include "fedmm/problems/remark1.hpp"

namespace fedmm::experiments {

using AnyProblem = std::variant<problems::DictionaryLearning, problems::Remark1Problem, problems::GmmEM,
                                problems::PoissonEM, problems::QuadSurrogate<problems::LeastSquaresLoss>>;

struct Instance {
  std::optional<AnyProblem> problem;
  federation::FederatedData fd;
  Dataset pooled;
};

inline std::uint64_t data_seed(const RunConfig& c) {
  return derive_seed(c.seed, {static_cast<std::uint64_t>(StreamPurpose::data)});
}
inline std::uint64_t split_seed(const RunConfig& c) {
  return derive_seed(c.seed, {static_cast<std::uint64_t>(StreamPurpose::split)});
}
inline std::uint64_t repeat_seed(std::uint64_t master, std::size_t r) {
  return derive_seed(master, {static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(StreamPurpose::repeat)});
}

struct LoadedData {
  Dataset pooled;
  std::vector<std::uint32_t> labels;          ///< generator labels (gmm)
  std::vector<Dataset> fixed_clients;         ///< sources that define clients themselves
  std::vector<double> fixed_weights;
};

inline LoadedData load_dataset(const RunConfig& c) {
  using detail::get;
  using detail::get_count;
  const Json& d = c.dataset;
  const std::string src = c.dataset_source();
  const std::string P = "dataset";
  Rng rng(data_seed(c));
  LoadedData out;
  if (src == "synthetic-dict") {
    const std::size_t p = get_count(d, P, "p");
    const std::size_t k = get_count(c.problem, "problem", "K", std::size_t{15});
    auto dd = datasets::gen_synthetic_dict(p, k, get_count(d, P, "tot"), get<double>(d, P, "sparsity", 0.2), rng);
    out.pooled = std::move(dd.data);
  } else if (src == "csv") {
    out.pooled = datasets::load_matrix_csv(get<std::string>(d, P, "path"), get<bool>(d, P, "header", false));
  } else if (src == "remark1") {
    const auto means = get<std::vector<double>>(d, P, "client_means");
    problems::Remark1Problem::validate({means, get<std::vector<double>>(d, P, "weights", std::vector<double>{}), 1e-12});
    out.fixed_clients = datasets::gen_remark1(means);
    out.fixed_weights = get<std::vector<double>>(d, P, "weights", std::vector<double>(means.size(), 1.0 / static_cast<double>(means.size())));
    RowMatrix rows(static_cast<Eigen::Index>(means.size()), 1);
    for (std::size_t i = 0; i < means.size(); ++i) rows(static_cast<Eigen::Index>(i), 0) = means[i];
    out.pooled = Dataset(std::move(rows), "remark1");
  } else if (src == "gmm") {
    auto g = datasets::gen_gmm(get_count(d, P, "p"), get<std::vector<double>>(d, P, "weights"),
                               get<double>(d, P, "separation", 3.0), get<double>(d, P, "sigma", 1.0),
                               get_count(d, P, "tot"), rng);
    for (std::size_t l : g.labels) out.labels.push_back(static_cast<std::uint32_t>(l));
    out.pooled = std::move(g.data);
  } else if (src == "poisson") {
    out.pooled = datasets::gen_poisson(get<double>(d, P, "theta", 0.0),
                                       get<std::vector<double>>(d, P, "latent_atoms", std::vector<double>{0.0}),
                                       get<std::vector<double>>(d, P, "latent_weights", std::vector<double>{1.0}),
                                       get_count(d, P, "tot"), rng);
  } else if (src == "linear") {
    out.pooled = datasets::gen_linear(get_count(d, P, "d"), get_count(d, P, "tot"), get<double>(d, P, "noise", 0.1), rng);
  }
  return out;
}

inline federation::FederatedData split_dataset(const RunConfig& c, const LoadedData& data) {
  if (!data.fixed_clients.empty()) return federation::FederatedData(data.fixed_clients, data.fixed_weights);
  const std::size_t n = c.split.n;
  if (c.split.mode == "homogeneous") return datasets::homogeneous_split(data.pooled, n);
  if (c.split.mode == "labels") {
    if (data.labels.empty()) throw ConfigError("split.mode", "labels are only available for the gmm source");
    std::vector<std::uint32_t> lab;
    for (std::uint32_t l : data.labels) lab.push_back(static_cast<std::uint32_t>(l % n));
    auto part = datasets::label_split(lab);
    part.n = n;
    return part.apply(data.pooled);
  }
  Rng rng(split_seed(c));
  return datasets::balanced_kmeans_split(data.pooled, n, rng, c.split.iters).apply(data.pooled);
}

inline AnyProblem make_problem(const RunConfig& c, const Dataset& pooled) {
  using detail::get;
  using detail::get_count;
  const Json& p = c.problem;
  const std::string P = "problem";
  const std::string kind = c.problem_kind();
  if (kind == "dictionary") {
    problems::DictLearnSpec s;
    s.p = pooled.dim();
    s.k = static_cast<Eigen::Index>(get_count(p, P, "K", std::size_t{15}));
    s.lambda = get<double>(p, P, "lambda", 0.1);
    s.eta = get<double>(p, P, "eta", 0.2);
    if (p.contains("lasso")) {
      s.lasso.max_iter = get_count(p.at("lasso"), "problem.lasso", "max_iter", s.lasso.max_iter);
      s.lasso.kkt_tol = get<double>(p.at("lasso"), "problem.lasso", "kkt_tol", s.lasso.kkt_tol);
    }
    return problems::DictionaryLearning(s);
  }
  if (kind == "remark1") {
    if (pooled.dim() != 1) throw ConfigError("dataset", "remark1 needs one-dimensional data");
    return problems::Remark1Problem(get<double>(p, P, "s_floor", 1e-12));
  }
  if (kind == "gmm") {
    std::vector<double> w;
    if (p.contains("weights")) {
      w = get<std::vector<double>>(p, P, "weights");
    } else if (c.dataset_source() == "gmm") {
      w = get<std::vector<double>>(c.dataset, "dataset", "weights");
      double total = 0.0;
      for (double v : w) total += v;
      for (double& v : w) v /= total;
    } else {
      throw ConfigError("problem.weights", "required unless the dataset source is gmm");
    }
    const double sigma = get<double>(p, P, "sigma", 1.0);
    if (!(sigma > 0.0)) throw ConfigError("problem.sigma", "must be > 0");
    problems::GmmEMSpec s;
    s.weights = w;
    s.covariances.assign(w.size(), sigma * sigma * Eigen::MatrixXd::Identity(pooled.dim(), pooled.dim()));
    s.lambda = get<double>(p, P, "lambda", 0.1);
    s.mean_z = pooled.mean();
    return problems::GmmEM(s);
  }
  if (kind == "poisson") {
    problems::PoissonEM::validate_counts(pooled);
    problems::PoissonEMSpec s;
    s.lambda = get<double>(p, P, "lambda", 1.0);
    s.mean_z = pooled.mean()[0];
    s.latent_atoms = get<std::vector<double>>(p, P, "latent_atoms", s.latent_atoms);
    s.latent_weights = get<std::vector<double>>(p, P, "latent_weights", s.latent_weights);
    s.bound_m = get<double>(p, P, "M", s.bound_m);
    s.inner_samples = get_count(p, P, "inner_samples", s.inner_samples);
    return problems::PoissonEM(s);
  }
  // quadratic: least squares on rows (a, b)
  if (pooled.dim() < 2) throw ConfigError("dataset", "least squares needs rows (a, b) with at least two columns");
  problems::QuadSurrogateSpec s;
  s.dim = pooled.dim() - 1;
  s.lipschitz = problems::LeastSquaresLoss::lipschitz(pooled);
  s.rho = get<double>(p, P, "rho", 1.0 / *s.lipschitz);
  if (p.contains("reg")) {
    const Json& r = p.at("reg");
    const std::string rk = get<std::string>(r, "problem.reg", "kind", std::string("none"));
    if (rk == "l1") {
      s.reg = problems::Regularizer::l1(get<double>(r, "problem.reg", "lambda"));
    } else if (rk == "box") {
      s.reg = problems::Regularizer::box(get<double>(r, "problem.reg", "lo"), get<double>(r, "problem.reg", "hi"));
    } else if (rk != "none") {
      throw ConfigError("problem.reg.kind", "unknown regularizer '" + rk + "'");
    }
  }
  return problems::QuadSurrogate<problems::LeastSquaresLoss>(s);
}

/// Loads the data, splits it and builds the problem; throws on any
/// inconsistency. This is all validate-config does beyond schema checks.
inline Instance build_instance(const RunConfig& c) {
  LoadedData data = load_dataset(c);
  Instance inst;
  inst.fd = split_dataset(c, data);
  inst.problem = make_problem(c, data.pooled);
  inst.pooled = std::move(data.pooled);
  std::visit(
      [&](const auto& prob) {
        if (!prob.supports_geometry(c.algorithm.geometry == "problem" ? Geometry::problem : Geometry::identity)) {
          throw ConfigError("algorithm.geometry", "not available for problem " + prob.name());
        }
      },
      *inst.problem);
  return inst;
}

inline federation::CompressionOperator make_compression(const CompressionCfg& q) {
  if (q.kind == "quant") return federation::CompressionOperator::quantization(q.bits);
  if (q.kind == "randk") return federation::CompressionOperator::rand_k(q.k);
  return federation::CompressionOperator::identity();
}

inline StepSchedule make_schedule(const ScheduleCfg& s, double beta) {
  if (s.kind == "constant") return StepSchedule::constant(s.gamma);
  if (s.kind == "harmonic") return StepSchedule::harmonic();
  return StepSchedule::sqrt_decay(beta);
}

inline federation::FedConfig make_fed_config(const RunConfig& c, double beta, std::uint64_t seed, std::string run_id) {
  const AlgorithmCfg& a = c.algorithm;
  federation::FedConfig f;
  f.alpha = a.alpha;
  f.p = a.p;
  f.compression = make_compression(a.compression);
  f.batch_size = a.batch_size;
  f.schedule = make_schedule(a.schedule, beta);
  f.rounds = a.t_max;
  f.geometry = a.geometry == "problem" ? Geometry::problem : Geometry::identity;
  f.v_init = a.v_init == "exact-local-field" ? federation::VInit::exact_local_field : federation::VInit::zeros;
  f.enforce_alpha = a.enforce_alpha;
  f.seed = seed;
  f.e_sp_cadence = a.e_sp_cadence;
  f.run_id = std::move(run_id);
  return f;
}

inline ModelParam theta_from_json(const Json& j, std::pair<Eigen::Index, Eigen::Index> shape) {
  ModelParam theta(shape.first, shape.second);
  if (j.is_number()) {
    theta.setConstant(j.get<double>());
    return theta;
  }
  try {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (static_cast<Eigen::Index>(rows.size()) != shape.first) throw ConfigError("init.theta", "row count mismatch");
    for (Eigen::Index i = 0; i < shape.first; ++i) {
      const auto& r = rows[static_cast<std::size_t>(i)];
      if (static_cast<Eigen::Index>(r.size()) != shape.second) throw ConfigError("init.theta", "column count mismatch");
      for (Eigen::Index k = 0; k < shape.second; ++k) theta(i, k) = r[static_cast<std::size_t>(k)];
    }
  } catch (const Json::exception&) {
    throw ConfigError("init.theta", "must be a number or a list of rows");
  }
  return theta;
}

struct RepeatResult {
  std::vector<MetricsRecord> records;
  double initial_objective = 0.0;
  std::vector<std::string> warnings;
};

template <MMProblem P>
std::vector<MetricsRecord> sa_ssmm_records(const P& problem, const Instance& inst, const federation::FedConfig& f,
                                           const SurrogateVector& s0) {
  if (f.rounds == 0) return {};
  SaSsmmConfig sc{f.batch_size, f.rounds, f.seed};
  const auto traj = sa_ssmm_run(problem, inst.pooled, f.schedule, sc, s0);
  std::vector<MetricsRecord> out;
  for (std::size_t t = 1; t < traj.size(); ++t) {
    MetricsRecord r;
    r.run_id = f.run_id;
    r.t = t;
    r.objective = federation::fleet_objective(problem, inst.fd, traj[t].theta);
    r.e_s = metric_e_s(traj[t].s, traj[t - 1].s, traj[t].gamma);
    r.e_ps = metric_e_ps(traj[t].theta, traj[t - 1].theta, traj[t].gamma);
    r.active_count = 1;
    out.push_back(std::move(r));
    if (record_diverged(out.back())) {
      federation::freeze_tail(out, f.rounds);
      break;
    }
  }
  return out;
}

/// s_{t+1} = calT(T(s_t)) on the whole fleet (gamma = 1).
template <MMProblem P>
std::vector<MetricsRecord> deterministic_records(const P& problem, const Instance& inst,
                                                 const federation::FedConfig& f, SurrogateVector s) {
  std::vector<MetricsRecord> out;
  ModelParam theta = problem.t_map(s);
  for (std::size_t t = 0; t < f.rounds; ++t) {
    SurrogateVector next = federation::fleet_sbar(problem, inst.fd, theta);
    if (!next.all_finite()) throw NumericOverflow("non-finite surrogate iterate", t + 1);
    ModelParam theta_next = problem.t_map(next);
    MetricsRecord r;
    r.run_id = f.run_id;
    r.t = t + 1;
    r.objective = federation::fleet_objective(problem, inst.fd, theta_next);
    r.e_s = metric_e_s(next, s, 1.0);
    r.e_ps = metric_e_ps(theta_next, theta, 1.0);
    r.active_count = inst.fd.size();
    s = std::move(next);
    theta = std::move(theta_next);
    out.push_back(std::move(r));
    if (record_diverged(out.back())) {
      federation::freeze_tail(out, f.rounds);
      break;
    }
  }
  return out;
}

inline RepeatResult run_repeat(const RunConfig& c, const Instance& inst, double beta, std::size_t r) {
  const std::uint64_t seed = repeat_seed(c.seed, r);
  const federation::FedConfig f = make_fed_config(c, beta, seed, "r" + std::to_string(r));
  return std::visit(
      [&](const auto& problem) {
        RepeatResult out;
        const SurrogateVector s0 =
            c.init_theta ? federation::fleet_sbar(problem, inst.fd, theta_from_json(*c.init_theta, problem.param_shape()))
                         : federation::default_initial_surrogate(problem, inst.fd, seed);
        const std::string& name = c.algorithm.name;
        if (name == "fedmm") {
          auto res = federation::fedmm_run(problem, inst.fd, f, s0);
          out.records = std::move(res.records);
          out.initial_objective = res.initial_objective;
          out.warnings = std::move(res.warnings);
        } else if (name == "naive-theta") {
          auto res = federation::naive_theta_run(problem, inst.fd, f, problem.t_map(s0));
          out.records = std::move(res.records);
          out.initial_objective = res.initial_objective;
          if (!res.divergence_reason.empty()) out.warnings.push_back(f.run_id + " diverged: " + res.divergence_reason);
        } else if (name == "sa-ssmm") {
          out.records = sa_ssmm_records(problem, inst, f, s0);
          out.initial_objective = federation::fleet_objective(problem, inst.fd, problem.t_map(s0));
        } else {
          out.records = deterministic_records(problem, inst, f, s0);
          out.initial_objective = federation::fleet_objective(problem, inst.fd, problem.t_map(s0));
        }
        return out;
      },
      *inst.problem);
}

/// FEDMM_THREADS: 0 or unset = hardware concurrency.
inline std::size_t worker_count(std::size_t jobs) {
  std::size_t n = 0;
  if (const char* env = std::getenv("FEDMM_THREADS")) n = static_cast<std::size_t>(std::strtoull(env, nullptr, 10));
  if (n == 0) n = std::max<unsigned>(1, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, jobs));
}

/// Runs all repeats; results are ordered by repeat index whatever the
/// scheduling.
inline std::vector<RepeatResult> run_repeats(const RunConfig& c, const Instance& inst, double beta) {
  std::vector<RepeatResult> results(c.repeats);
  std::vector<std::exception_ptr> errors(c.repeats);
  const std::size_t workers = worker_count(c.repeats);
  auto work = [&](std::size_t w) {
    for (std::size_t r = w; r < c.repeats; r += workers) {
      try {
        results[r] = run_repeat(c, inst, beta, r);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

struct ExperimentOutput {
  std::string csv_path;
  std::string summary_path;
  std::optional<double> beta;
  std::size_t diverged_runs = 0;
};

struct ExperimentReport {
  std::vector<ExperimentOutput> outputs;
  std::vector<std::string> warnings;
};

inline std::string with_suffix(const std::string& path, const std::string& suffix) {
  const auto dot = path.rfind('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + suffix;
  return path.substr(0, dot) + suffix + path.substr(dot);
}

/// Executes the configured experiment and writes the long-form and summary CSVs
/// (one pair per beta when a grid is given).
inline ExperimentReport run_experiment(const RunConfig& c) {
  const Instance inst = build_instance(c);
  ExperimentReport report;
  std::vector<std::optional<double>> betas;
  if (c.algorithm.schedule.beta_grid.empty()) {
    betas.emplace_back();
  } else {
    for (double b : c.algorithm.schedule.beta_grid) betas.emplace_back(b);
  }
  for (const auto& beta : betas) {
    const double b = beta.value_or(c.algorithm.schedule.beta);
    auto results = run_repeats(c, inst, b);
    std::vector<std::vector<MetricsRecord>> runs;
    ExperimentOutput o;
    o.beta = beta;
    for (auto& r : results) {
      if (!r.records.empty() && r.records.back().diverged) ++o.diverged_runs;
      for (auto& w : r.warnings) report.warnings.push_back(std::move(w));
      runs.push_back(std::move(r.records));
    }
    const std::string tag = beta ? "_beta" + datasets::format_double(*beta) : std::string{};
    o.csv_path = beta ? with_suffix(c.output_path, tag) : c.output_path;
    o.summary_path = beta ? with_suffix(c.summary_path, tag) : c.summary_path;
    for (const std::string& path : {o.csv_path, o.summary_path}) {
      const auto parent = std::filesystem::path(path).parent_path();
      if (!parent.empty()) std::filesystem::create_directories(parent);
    }
    std::ostringstream long_csv;
    write_metrics_csv(long_csv, runs);
    save_text(o.csv_path, long_csv.str());
    std::ostringstream summary;
    write_summary_csv(summary, summarize(runs));
    save_text(o.summary_path, summary.str());
    report.outputs.push_back(std::move(o));
  }
  return report;
}

}  // namespace fedmm::experiments
