#pragma once

// Command-line front end. Exit codes: 0 success (a diverged run is still a
// success), 1 runtime error, 2 usage error.

#include <cstddef>
#include <cstdint>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedmm/core/errors.hpp"
#include "fedmm/core/rng.hpp"
#include "fedmm/datasets/csv.hpp"
#include "fedmm/datasets/partition.hpp"
#include "fedmm/datasets/synthetic.hpp"
#include "fedmm/experiments/config.hpp"
#include "fedmm/experiments/runner.hpp"
#include "fedmm/federation/compression.hpp"

namespace fedmm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// "identity", "quantB" or "randkK".
inline federation::CompressionOperator parse_op(const std::string& s) {
  auto number = [&](std::size_t prefix) -> unsigned long {
    const std::string digits = s.substr(prefix);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("--op", "expected identity, quant<bits> or randk<k>, got '" + s + "'");
    }
    return std::stoul(digits);
  };
  if (s == "identity") return federation::CompressionOperator::identity();
  if (s.rfind("quant", 0) == 0) return federation::CompressionOperator::quantization(static_cast<unsigned>(number(5)));
  if (s.rfind("randk", 0) == 0) return federation::CompressionOperator::rand_k(number(5));
  throw ConfigError("--op", "expected identity, quant<bits> or randk<k>, got '" + s + "'");
}

inline experiments::RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  experiments::Json tree = experiments::load_json_file(path);
  for (const std::string& o : overrides) experiments::apply_override(tree, o);
  return experiments::parse_config(tree);
}

inline int cli_run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Federated surrogate-space majorize-minimization simulator", "fedmm"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  std::string run_config;
  std::optional<std::uint64_t> run_seed;
  std::string run_out;
  std::vector<std::string> run_overrides;
  run->add_option("--config", run_config, "Config file (JSON)")->required();
  run->add_option("--seed", run_seed, "Master seed (overrides the config)");
  run->add_option("--out", run_out, "Long-form CSV path (overrides output.path)");
  run->add_option("--override", run_overrides, "Dotted key=value override, repeatable")->take_all();

  // validate-config
  auto* validate = app.add_subcommand("validate-config", "Check a config without running it");
  std::string val_config;
  std::vector<std::string> val_overrides;
  validate->add_option("--config", val_config, "Config file (JSON)")->required();
  validate->add_option("--override", val_overrides, "Dotted key=value override, repeatable")->take_all();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as CSV");
  std::string gen_kind = "dict";
  std::size_t gen_p = 20, gen_k = 15, gen_tot = 1000;
  double gen_sparsity = 0.2, gen_noise = 0.1;
  std::uint64_t gen_seed = 0;
  std::string gen_out, gen_theta_out;
  gen->add_option("--kind", gen_kind, "dict or linear")->check(CLI::IsMember({"dict", "linear"}));
  gen->add_option("--p", gen_p, "Observation dimension (dict) or regressor dimension (linear)");
  gen->add_option("--K", gen_k, "Dictionary size");
  gen->add_option("--tot", gen_tot, "Number of rows");
  gen->add_option("--sparsity", gen_sparsity, "Fraction of nonzero code entries");
  gen->add_option("--noise", gen_noise, "Label noise (linear)");
  gen->add_option("--seed", gen_seed, "Seed");
  gen->add_option("--out", gen_out, "Output CSV")->required();
  gen->add_option("--theta-out", gen_theta_out, "Also write the true dictionary (dict)");

  // split
  auto* split = app.add_subcommand("split", "Partition a CSV dataset across clients");
  std::string split_data, split_out, split_mode = "balanced-kmeans";
  std::size_t split_n = 2, split_iters = 50;
  std::uint64_t split_seed = 0;
  bool split_header = false;
  split->add_option("--data", split_data, "Input CSV")->required();
  split->add_option("--n", split_n, "Number of clients");
  split->add_option("--mode", split_mode, "balanced-kmeans")->check(CLI::IsMember({"balanced-kmeans"}));
  split->add_option("--iters", split_iters, "Lloyd iterations");
  split->add_option("--seed", split_seed, "Seed");
  split->add_flag("--header", split_header, "Input has a header line");
  split->add_option("--out", split_out, "Partition CSV (row_index,client_id)")->required();

  // bench-compress
  auto* bench = app.add_subcommand("bench-compress", "Monte Carlo estimate of a codec's omega");
  std::string bench_op = "quant8";
  std::size_t bench_dim = 100, bench_trials = 100000, bench_vectors = 1;
  std::uint64_t bench_seed = 0;
  bench->add_option("--op", bench_op, "identity, quant<bits> or randk<k>");
  bench->add_option("--dim", bench_dim, "Vector length");
  bench->add_option("--trials", bench_trials, "Draws per vector");
  bench->add_option("--vectors", bench_vectors, "Number of random test vectors");
  bench->add_option("--seed", bench_seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) {
      experiments::RunConfig cfg = load_config(run_config, run_overrides);
      if (run_seed) cfg.seed = *run_seed;
      if (!run_out.empty()) {
        const bool derived = cfg.summary_path == experiments::default_summary_path(cfg.output_path);
        cfg.output_path = run_out;
        if (derived) cfg.summary_path = experiments::default_summary_path(run_out);
      }
      const auto report = experiments::run_experiment(cfg);
      for (const std::string& w : report.warnings) err << "warning: " << w << '\n';
      for (const auto& o : report.outputs) {
        out << "wrote " << o.csv_path << " and " << o.summary_path;
        if (o.beta) out << " (beta=" << datasets::format_double(*o.beta) << ")";
        if (o.diverged_runs) out << "; " << o.diverged_runs << " of " << cfg.repeats << " repeats diverged";
        out << '\n';
      }
    } else if (*validate) {
      const experiments::RunConfig cfg = load_config(val_config, val_overrides);
      experiments::build_instance(cfg);
      out << "ok: " << val_config << '\n';
    } else if (*gen) {
      Rng rng(gen_seed);
      if (gen_kind == "dict") {
        const auto d = datasets::gen_synthetic_dict(gen_p, gen_k, gen_tot, gen_sparsity, rng);
        datasets::save_matrix_csv(gen_out, d.data);
        if (!gen_theta_out.empty()) {
          RowMatrix th = d.theta_star;
          datasets::save_matrix_csv(gen_theta_out, Dataset(th, "theta*"));
        }
      } else {
        datasets::save_matrix_csv(gen_out, datasets::gen_linear(gen_p, gen_tot, gen_noise, rng));
      }
      out << "wrote " << gen_out << '\n';
    } else if (*split) {
      const Dataset data = datasets::load_matrix_csv(split_data, split_header);
      Rng rng(split_seed);
      const auto part = datasets::balanced_kmeans_split(data, split_n, rng, split_iters);
      datasets::save_partition_csv(split_out, part);
      out << "wrote " << split_out << " (" << data.size() << " rows, " << split_n << " clients)\n";
    } else if (*bench) {
      const auto op = parse_op(bench_op);
      if (bench_dim == 0 || bench_trials == 0) throw ConfigError("--dim/--trials", "must be >= 1");
      Rng rng(bench_seed);
      std::vector<SurrogateVector> vs;
      const Layout layout = Layout::flat(static_cast<Eigen::Index>(bench_dim));
      for (std::size_t v = 0; v < bench_vectors; ++v) {
        SurrogateVector s(layout);
        for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.normal();
        vs.push_back(std::move(s));
      }
      const double emp = federation::estimate_omega(op, vs, bench_trials, rng);
      out << "op=" << op.describe() << " dim=" << bench_dim << " trials=" << bench_trials
          << " omega_declared=" << datasets::format_double(op.omega(layout))
          << " omega_empirical=" << datasets::format_double(emp) << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace fedmm::cli
