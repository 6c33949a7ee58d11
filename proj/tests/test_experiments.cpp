#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedmm/core/metrics.hpp"
#include "fedmm/datasets/synthetic.hpp"
#include "fedmm/experiments/config.hpp"
#include "fedmm/experiments/csv_output.hpp"
#include "fedmm/experiments/runner.hpp"
#include "fedmm/federation/fedmm.hpp"
#include "fedmm/federation/naive.hpp"
#include "fedmm/problems/remark1.hpp"

using namespace fedmm;
using namespace fedmm::experiments;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fedmm_test_experiments_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Json remark1_tree(const std::filesystem::path& out) {
  return Json::parse(R"({
    "problem": {"kind": "remark1"},
    "dataset": {"source": "remark1", "client_means": [1, 4], "weights": [0.5, 0.5]},
    "algorithm": {"name": "fedmm", "schedule": {"kind": "harmonic"}, "T_max": 20},
    "repeats": 10, "seed": 3,
    "output": {"path": ")" + out.string() + R"("}
  })");
}

Json dict_tree(const std::filesystem::path& out) {
  return Json::parse(R"({
    "problem": {"kind": "dictionary", "K": 3, "lambda": 0.1, "eta": 0.2},
    "dataset": {"source": "synthetic-dict", "p": 4, "tot": 40, "sparsity": 0.5},
    "split": {"mode": "balanced-kmeans", "n": 4},
    "algorithm": {"name": "fedmm", "alpha": 0.01, "p": 0.5, "compression": {"kind": "quant", "bits": 8},
                  "batch_size": 5, "schedule": {"kind": "sqrt-decay", "beta": 0.05}, "T_max": 15},
    "repeats": 3, "seed": 11,
    "output": {"path": ")" + out.string() + R"("}
  })");
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::string error_path(const Json& tree) {
  try {
    parse_config(tree);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// theta_{t+1} = 3 theta_t under any averaging; used to exercise divergence.
struct Expanding {
  std::string name() const { return "expanding"; }
  Layout surrogate_layout() const { return Layout::flat(1); }
  std::pair<Eigen::Index, Eigen::Index> param_shape() const { return {1, 1}; }
  ModelParam t_map(const SurrogateVector& s) const { return ModelParam::Constant(1, 1, s.data()[0]); }
  SurrogateVector oracle(const Dataset&, std::span<const std::size_t>, const ModelParam& theta, Rng&) const {
    return SurrogateVector(Layout::flat(1), Vector::Constant(1, 3.0 * theta(0, 0)));
  }
  SurrogateVector exact_sbar(const Dataset&, const ModelParam& theta) const {
    return SurrogateVector(Layout::flat(1), Vector::Constant(1, 3.0 * theta(0, 0)));
  }
  double loss(const Dataset&, const ModelParam& theta) const { return theta(0, 0) * theta(0, 0); }
  double penalty(const ModelParam&) const { return 0.0; }
  SurrogateVector project(const SurrogateVector& s, Geometry) const { return s; }
  bool in_surrogate_set(const SurrogateVector&) const { return true; }
  bool supports_geometry(Geometry g) const { return g == Geometry::identity; }
};
static_assert(MMProblem<Expanding>);

}  // namespace

TEST(Metrics, SurrogateStepExamples) {
  const SurrogateVector a(Layout::flat(3), Vector::Zero(3));
  Vector u(3);
  u << 1, 2, 2;
  const SurrogateVector b(Layout::flat(3), 0.5 * u);
  EXPECT_DOUBLE_EQ(metric_e_s(b, a, 0.5), 9.0);
  EXPECT_EQ(metric_e_s(a, a, 0.3), 0.0);
  EXPECT_EQ(metric_e_p(ModelParam::Ones(2, 2), ModelParam::Ones(2, 2), 0.1), 0.0);
}

TEST(Metrics, DivergenceFlag) {
  EXPECT_TRUE(metric_diverged(2e12));
  EXPECT_TRUE(metric_diverged(std::nan("")));
  EXPECT_FALSE(metric_diverged(1e11));
  MetricsRecord r;
  r.objective = 1.0;
  r.e_sp = 1e13;
  EXPECT_TRUE(record_diverged(r));
}

TEST(Config, ParsesDefaultsAndSummaryPath) {
  const RunConfig c = parse_config(remark1_tree("out/r.csv"));
  EXPECT_EQ(c.problem_kind(), "remark1");
  EXPECT_EQ(c.repeats, 10u);
  EXPECT_EQ(c.algorithm.t_max, 20u);
  EXPECT_EQ(c.algorithm.e_sp_cadence, 10u);
  EXPECT_EQ(c.summary_path, "out/r_summary.csv");
  EXPECT_EQ(default_summary_path("a.b/run"), "a.b/run_summary.csv");
}

TEST(Config, ErrorsNameTheField) {
  Json t = remark1_tree("x.csv");
  t["algorithm"]["p"] = 1.5;
  EXPECT_EQ(error_path(t), "algorithm.p");
  t = remark1_tree("x.csv");
  t["algorithm"]["compression"] = Json{{"kind", "zip"}};
  EXPECT_EQ(error_path(t), "algorithm.compression.kind");
  t = remark1_tree("x.csv");
  t["algorithm"]["schedule"]["typo"] = 1;
  EXPECT_EQ(error_path(t), "algorithm.schedule.typo");
  t = remark1_tree("x.csv");
  t["repeats"] = 0;
  EXPECT_EQ(error_path(t), "repeats");
  t = remark1_tree("x.csv");
  t["algorithm"]["T_max"] = -3;
  EXPECT_EQ(error_path(t), "algorithm.T_max");
  t = remark1_tree("x.csv");
  t["algorithm"]["alpha"] = "big";
  EXPECT_EQ(error_path(t), "algorithm.alpha");
  t = remark1_tree("x.csv");
  t.erase("dataset");
  EXPECT_EQ(error_path(t), "dataset");
  t = remark1_tree("x.csv");
  t["split"] = Json{{"mode", "random"}};
  EXPECT_EQ(error_path(t), "split.mode");
}

TEST(Config, OverridesUseDottedPaths) {
  Json t = remark1_tree("x.csv");
  apply_override(t, "algorithm.p=0.5");
  apply_override(t, "algorithm.name=naive-theta");
  apply_override(t, "algorithm.compression.kind=quant");
  const RunConfig c = parse_config(t);
  EXPECT_DOUBLE_EQ(c.algorithm.p, 0.5);
  EXPECT_EQ(c.algorithm.name, "naive-theta");
  EXPECT_EQ(c.algorithm.compression.kind, "quant");
  EXPECT_THROW(apply_override(t, "noequals"), ConfigError);
  EXPECT_THROW(apply_override(t, "repeats.x=1"), ConfigError);
}

TEST(Config, AlphaEnforcementAtBuildTime) {
  const auto dir = scratch("alpha");
  Json t = dict_tree(dir / "run.csv");
  t["algorithm"]["alpha"] = 0.9;
  t["algorithm"]["enforce_alpha"] = true;
  EXPECT_THROW(run_experiment(parse_config(t)), ConfigError);
}

TEST(RunExperiment, SingleRoundGivesOneRow) {
  const auto dir = scratch("one");
  Json t = remark1_tree(dir / "run.csv");
  t["repeats"] = 1;
  t["algorithm"]["T_max"] = 1;
  const auto rep = run_experiment(parse_config(t));
  ASSERT_EQ(rep.outputs.size(), 1u);
  const auto rows = read_csv(rep.outputs[0].csv_path);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(slurp(rep.outputs[0].csv_path).substr(0, std::string(kCsvHeader).size()), kCsvHeader);
  EXPECT_EQ(rows[1][1], "1");
}

TEST(RunExperiment, RemarkOneRepeatsHaveZeroSpread) {
  const auto dir = scratch("r1");
  const auto rep = run_experiment(parse_config(remark1_tree(dir / "run.csv")));
  const auto rows = read_csv(rep.outputs[0].summary_path);
  ASSERT_EQ(rows.size(), 1u + 2u * 20u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][0] != "std") continue;
    EXPECT_EQ(std::stod(rows[i][2]), 0.0) << "row " << i;
    EXPECT_EQ(std::stod(rows[i][3]), 0.0) << "row " << i;
  }
  const auto last_mean = rows[rows.size() - 2];
  EXPECT_EQ(last_mean[0], "mean");
  EXPECT_EQ(last_mean[1], "20");
}

TEST(RunExperiment, SummaryUsesSampleStd) {
  std::vector<std::vector<MetricsRecord>> runs(3);
  const double obj[] = {1.0, 2.0, 4.0};
  for (int r = 0; r < 3; ++r) {
    MetricsRecord m;
    m.t = 1;
    m.objective = obj[r];
    m.e_s = r == 0 ? std::optional<double>() : std::optional<double>(obj[r]);
    runs[r].push_back(m);
  }
  const auto s = summarize(runs);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_DOUBLE_EQ(*s[0].mean[0], 7.0 / 3.0);
  EXPECT_NEAR(*s[0].std[0], std::sqrt(((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) +
                                       (4 - 7.0 / 3) * (4 - 7.0 / 3)) / 2.0),
              1e-15);
  EXPECT_DOUBLE_EQ(*s[0].mean[1], 3.0);
  EXPECT_FALSE(s[0].mean[3].has_value());
}

TEST(RunExperiment, SeedsReproduceAndDiffer) {
  const auto dir = scratch("seeds");
  Json t = dict_tree(dir / "a.csv");
  const auto a = run_experiment(parse_config(t));
  t["output"]["path"] = (dir / "b.csv").string();
  const auto b = run_experiment(parse_config(t));
  EXPECT_EQ(slurp(a.outputs[0].csv_path), slurp(b.outputs[0].csv_path));
  t["output"]["path"] = (dir / "c.csv").string();
  t["seed"] = 12;
  const auto c = run_experiment(parse_config(t));
  EXPECT_NE(slurp(a.outputs[0].csv_path), slurp(c.outputs[0].csv_path));
  EXPECT_NE(repeat_seed(11, 0), repeat_seed(11, 1));
  EXPECT_NE(repeat_seed(11, 0), repeat_seed(12, 0));
}

TEST(RunExperiment, ThreadCountDoesNotChangeOutput) {
  const auto dir = scratch("threads");
  Json t = dict_tree(dir / "one.csv");
  setenv("FEDMM_THREADS", "1", 1);
  const auto a = run_experiment(parse_config(t));
  t["output"]["path"] = (dir / "three.csv").string();
  setenv("FEDMM_THREADS", "3", 1);
  const auto b = run_experiment(parse_config(t));
  unsetenv("FEDMM_THREADS");
  EXPECT_EQ(slurp(a.outputs[0].csv_path), slurp(b.outputs[0].csv_path));
}

TEST(RunExperiment, BetaGridWritesOneFilePerValue) {
  const auto dir = scratch("grid");
  Json t = dict_tree(dir / "run.csv");
  t["repeats"] = 1;
  t["algorithm"]["T_max"] = 3;
  t["algorithm"]["schedule"]["beta_grid"] = {0.001, 0.05};
  const auto rep = run_experiment(parse_config(t));
  ASSERT_EQ(rep.outputs.size(), 2u);
  EXPECT_EQ(rep.outputs[0].csv_path, (dir / "run_beta0.001.csv").string());
  EXPECT_EQ(rep.outputs[1].csv_path, (dir / "run_beta0.050000000000000003.csv").string());
  for (const auto& o : rep.outputs) {
    EXPECT_TRUE(std::filesystem::exists(o.csv_path));
    EXPECT_TRUE(std::filesystem::exists(o.summary_path));
  }
  EXPECT_NE(slurp(rep.outputs[0].csv_path), slurp(rep.outputs[1].csv_path));
}

TEST(RunExperiment, FamiliesPopulateTheirOwnMetrics) {
  const auto dir = scratch("families");
  for (const char* name : {"fedmm", "sa-ssmm", "deterministic-mm", "naive-theta"}) {
    Json t = dict_tree(dir / (std::string(name) + ".csv"));
    t["repeats"] = 1;
    t["algorithm"]["T_max"] = 10;
    t["algorithm"]["name"] = name;
    const auto rep = run_experiment(parse_config(t));
    const auto rows = read_csv(rep.outputs[0].csv_path);
    ASSERT_EQ(rows.size(), 11u) << name;
    const bool param_family = std::string(name) == "naive-theta";
    for (std::size_t i = 1; i < rows.size(); ++i) {
      EXPECT_EQ(rows[i][3].empty(), param_family) << name;
      EXPECT_EQ(rows[i][4].empty(), param_family) << name;
      EXPECT_EQ(rows[i][6].empty(), !param_family) << name;
    }
    if (param_family) EXPECT_FALSE(rows[10][5].empty());
  }
}

TEST(RunExperiment, LoggedSurrogateStepMatchesPostHoc) {
  Rng rng(5);
  const Dataset d = datasets::gen_synthetic_dict(4, 3, 24, 0.5, rng).data;
  problems::DictLearnSpec s;
  s.p = 4;
  s.k = 3;
  const problems::DictionaryLearning prob(s);
  const federation::FederatedData fd = datasets::homogeneous_split(d, 3);
  federation::FedConfig c;
  c.p = 0.7;
  c.alpha = 0.05;
  c.compression = federation::CompressionOperator::quantization(6);
  c.batch_size = 4;
  c.schedule = StepSchedule::sqrt_decay(0.1);
  c.rounds = 25;
  c.seed = 9;
  c.keep_history = true;
  const auto res = federation::fedmm_run(prob, fd, c, federation::default_initial_surrogate(prob, fd, 2));
  for (std::size_t t = 1; t <= 25; ++t) {
    const double g = 0.1 / std::sqrt(0.1 + static_cast<double>(t));
    const double post = (res.s_history[t].data() - res.s_history[t - 1].data()).squaredNorm() / (g * g);
    EXPECT_NEAR(*res.records[t - 1].e_s, post, 1e-12 * std::max(1.0, post));
  }
}

TEST(RunExperiment, NaiveRemarkOneStepMetricsVanish) {
  const problems::Remark1Problem prob;
  const federation::FederatedData fd(datasets::gen_remark1({1.0, 4.0}), {0.5, 0.5});
  federation::FedConfig c;
  c.rounds = 6;
  c.e_sp_cadence = 1;
  const auto res = federation::naive_theta_run(prob, fd, c, ModelParam::Constant(1, 1, 3.0));
  EXPECT_GT(*res.records[0].e_p, 0.0);
  for (std::size_t t = 1; t < res.records.size(); ++t) {
    EXPECT_EQ(*res.records[t].e_p, 0.0);
    EXPECT_EQ(*res.records[t].e_sp, 0.0);
  }
  // One exact MM step from the naive limit moves it: 1/sqrt(2.5) - 0.75.
  const Dataset pooled(RowMatrix::Constant(1, 1, 2.5), "pooled");
  EXPECT_NEAR(std::abs(mm_step_theta(prob, pooled, res.theta)(0, 0) - res.theta(0, 0)), 0.75 - 1.0 / std::sqrt(2.5),
              1e-15);
}

TEST(RunExperiment, NaiveDivergenceIsAResultNotAnError) {
  const Expanding prob;
  const federation::FederatedData fd({Dataset(RowMatrix::Ones(2, 1)), Dataset(RowMatrix::Ones(3, 1))}, {0.4, 0.6});
  federation::FedConfig c;
  c.rounds = 100;
  c.e_sp_cadence = 1;
  const auto res = federation::naive_theta_run(prob, fd, c, ModelParam::Ones(1, 1));
  ASSERT_EQ(res.records.size(), 100u);
  EXPECT_FALSE(res.divergence_reason.empty());
  std::size_t first = 0;
  while (!res.records[first].diverged) ++first;
  EXPECT_LT(first, 40u);
  for (std::size_t t = first; t < 100; ++t) {
    EXPECT_TRUE(res.records[t].diverged);
    EXPECT_EQ(res.records[t].t, t + 1);
    EXPECT_EQ(res.records[t].objective, res.records[first].objective);
  }
}
