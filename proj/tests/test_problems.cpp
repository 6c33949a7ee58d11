#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "fedmm/core/problem.hpp"
#include "fedmm/datasets/synthetic.hpp"
#include "fedmm/problems/dictionary.hpp"
#include "fedmm/problems/gmm_em.hpp"
#include "fedmm/problems/lasso.hpp"
#include "fedmm/problems/poisson_em.hpp"
#include "fedmm/problems/projection.hpp"
#include "fedmm/problems/prox.hpp"
#include "fedmm/problems/quadratic.hpp"
#include "fedmm/problems/remark1.hpp"
#include "oracles.hpp"

using namespace fedmm;
using namespace fedmm::problems;

namespace {

Dataset column(std::vector<double> v) {
  RowMatrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return Dataset(m, "test");
}

DictionaryLearning dict(Eigen::Index p, Eigen::Index k, double lambda = 0.1, double eta = 0.2) {
  DictLearnSpec s;
  s.p = p;
  s.k = k;
  s.lambda = lambda;
  s.eta = eta;
  return DictionaryLearning(s);
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST(Prox, SoftThresholdBoxAndIdentity) {
  const auto l1 = Regularizer::l1(0.2);
  EXPECT_NEAR(l1.prox(0.5, Eigen::MatrixXd::Constant(1, 1, 0.25))(0, 0), 0.15, 1e-15);
  EXPECT_EQ(l1.prox(0.5, Eigen::MatrixXd::Constant(1, 1, 0.05))(0, 0), 0.0);
  EXPECT_NEAR(l1.prox(0.5, Eigen::MatrixXd::Constant(1, 1, -0.3))(0, 0), -0.2, 1e-15);
  const Eigen::MatrixXd v = Eigen::MatrixXd::Constant(2, 1, 7.5);
  EXPECT_EQ(Regularizer::none().prox(3.0, v), v);
  const auto box = Regularizer::box(-1.0, 1.0);
  Eigen::MatrixXd w(3, 1);
  w << -3.0, 0.5, 2.0;
  const Eigen::MatrixXd pw = box.prox(1.0, w);
  EXPECT_EQ(pw(0, 0), -1.0);
  EXPECT_EQ(pw(1, 0), 0.5);
  EXPECT_EQ(pw(2, 0), 1.0);
  EXPECT_TRUE(std::isinf(box.value(w)));
  EXPECT_THROW(Regularizer::box(1.0, 0.0), ConfigError);
  EXPECT_THROW(l1.prox(0.0, v), DomainError);
}

TEST(Lasso, ScalarAndZeroDatum) {
  const Eigen::MatrixXd th = Eigen::MatrixXd::Constant(1, 1, 1.0);
  EXPECT_NEAR(lasso_code(Eigen::VectorXd::Constant(1, 1.0), th, 0.1)[0], 0.95, 1e-10);
  Rng rng(1);
  const Eigen::MatrixXd t2 = random_matrix(4, 3, rng);
  EXPECT_EQ(lasso_code(Eigen::VectorXd::Zero(4), t2, 0.1).norm(), 0.0);
}

TEST(Lasso, MatchesSignEnumerationAndKkt) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto k = static_cast<Eigen::Index>(1 + rng.uniform_index(6));
    const auto p = static_cast<Eigen::Index>(1 + rng.uniform_index(8));
    const Eigen::MatrixXd th = random_matrix(p, k, rng);
    const Eigen::VectorXd z = random_matrix(p, 1, rng);
    const double lambda = 0.05 + rng.uniform();
    const Eigen::VectorXd h = lasso_code(z, th, lambda);
    const Eigen::VectorXd ref = oracle::lasso_enumerate(z, th, lambda);
    ASSERT_LE(oracle::lasso_obj(z, th, lambda, h) - oracle::lasso_obj(z, th, lambda, ref), 1e-8) << "trial " << trial;
    ASSERT_LE(lasso_kkt_residual(th.transpose() * th, th.transpose() * z, lambda, h), 1e-8);
  }
}

TEST(Lasso, NearDuplicateColumns) {
  Eigen::MatrixXd th(5, 3);
  th << -0.34947622595791367, -0.34947622620852731, -0.34947622072250423, 0.2505708882390702, 0.25057088831143665,
      0.25057088673449329, 0.21471373877556485, 0.21471373869933605, 0.21471374037246413, 0.24406703440162833,
      0.24406703438470861, 0.24406703475364244, 0.64526561390483661, 0.64526561376901681, 0.64526561673789717;
  Eigen::VectorXd z(5);
  z << -4.679113352622891, 2.7559955394036253, 1.3323348504099743, 1.8601572997577906, 4.2558720970366144;
  const Eigen::VectorXd h = lasso_code(z, th, 0.1);
  const Eigen::VectorXd ref = oracle::lasso_enumerate(z, th, 0.1);
  EXPECT_LE(std::abs(oracle::lasso_obj(z, th, 0.1, h) - oracle::lasso_obj(z, th, 0.1, ref)), 1e-8);
  EXPECT_LE(lasso_kkt_residual(th.transpose() * th, th.transpose() * z, 0.1, h), 1e-8);
}

TEST(Lasso, ReportsNonConvergence) {
  Rng rng(3);
  const Eigen::MatrixXd th = random_matrix(6, 4, rng);
  const Eigen::VectorXd z = random_matrix(6, 1, rng);
  LassoConfig cfg;
  cfg.max_iter = 1;
  cfg.kkt_tol = 1e-300;
  EXPECT_THROW(lasso_code(z, th, 0.1, cfg), SolverDivergence);
  EXPECT_THROW(lasso_code(z, th, -1.0), DomainError);
}

TEST(DictOracle, SingleDatumAndZeroCodes) {
  const auto dl = dict(3, 2);
  Rng rng(4);
  const Eigen::MatrixXd th = random_matrix(3, 2, rng);
  RowMatrix m(1, 3);
  m << 1.0, -2.0, 0.5;
  const Dataset d(m, "one");
  const Eigen::VectorXd z = m.row(0).transpose();
  const Eigen::VectorXd h = lasso_code(z, th, 0.1);
  const SurrogateVector s = dl.exact_sbar(d, th);
  EXPECT_LE((Eigen::MatrixXd(s.block(0)) - h * h.transpose()).norm(), 1e-14);
  EXPECT_LE((Eigen::MatrixXd(s.block(1)) - z * h.transpose()).norm(), 1e-14);
  const auto big = dict(3, 2, 100.0);
  EXPECT_EQ(big.exact_sbar(d, th).norm(), 0.0);
}

TEST(DictOracle, BatchIsMeanOfDatumTerms) {
  const auto dl = dict(4, 3);
  Rng rng(5);
  const Eigen::MatrixXd th = random_matrix(4, 3, rng);
  RowMatrix m = random_matrix(3, 4, rng);
  const Dataset d(m, "three");
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(3, 3), s2 = Eigen::MatrixXd::Zero(4, 3);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const Eigen::VectorXd z = m.row(i).transpose();
    const Eigen::VectorXd h = lasso_code(z, th, 0.1);
    s1 += h * h.transpose() / 3.0;
    s2 += z * h.transpose() / 3.0;
  }
  const SurrogateVector s = dl.exact_sbar(d, th);
  EXPECT_LE((Eigen::MatrixXd(s.block(0)) - s1).norm(), 1e-13);
  EXPECT_LE((Eigen::MatrixXd(s.block(1)) - s2).norm(), 1e-13);
}

TEST(DictOracle, FirstBlockIsPsd) {
  Rng rng(6);
  const auto dd = datasets::gen_synthetic_dict(6, 4, 300, 0.5, rng);
  const auto dl = dict(6, 4);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::MatrixXd th = random_matrix(6, 4, rng);
    const auto idx = rng.sample_without_replacement(300, 1 + rng.uniform_index(8));
    const SurrogateVector s = dl.oracle(dd.data, idx, th, rng);
    ASSERT_GE(min_symmetric_eigenvalue(s.block(0)), -1e-12);
  }
}

TEST(DictTMap, ClosedFormsAndNormalEquations) {
  const auto d1 = dict(1, 1);
  EXPECT_NEAR(d1.t_map(d1.make_surrogate(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::MatrixXd::Constant(1, 1, 3.0)))(0, 0),
              3.0 / 2.2, 1e-15);
  const auto d2 = dict(4, 2);
  EXPECT_EQ(d2.t_map(d2.make_surrogate(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Zero(4, 2))).norm(), 0.0);
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd b = random_matrix(2, 2, rng);
    const Eigen::MatrixXd s1 = b * b.transpose();
    const Eigen::MatrixXd s2 = random_matrix(4, 2, rng);
    const ModelParam th = d2.t_map(d2.make_surrogate(s1, s2));
    ASSERT_LE((th * (s1 + 0.2 * Eigen::MatrixXd::Identity(2, 2)) - s2).norm(), 1e-10);
    // Surrogate Tr(th' th s1) - 2 Tr(th' s2) + eta ||th||^2 is minimal at th.
    auto surr = [&](const Eigen::MatrixXd& t) {
      return (t.transpose() * t * s1).trace() - 2.0 * (t.transpose() * s2).trace() + 0.2 * t.squaredNorm();
    };
    for (int probe = 0; probe < 50; ++probe) {
      ASSERT_LT(surr(th), surr(th + 0.1 * random_matrix(4, 2, rng)));
    }
  }
  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
  bad(1, 1) = -1.0;
  EXPECT_THROW(d2.t_map(d2.make_surrogate(bad, Eigen::MatrixXd::Zero(4, 2))), DomainError);
  EXPECT_THROW(dict(2, 2, 0.1, 0.0), ConfigError);
}

TEST(PoissonTMap, ClosedForms) {
  PoissonEMSpec s;
  s.lambda = 1.0;
  s.mean_z = 2.0;
  const PoissonEM p(s);
  EXPECT_NEAR(p.t_map(p.make_surrogate(-1.0))(0, 0), 0.0, 1e-15);
  s.mean_z = std::numbers::e;
  const PoissonEM q(s);
  EXPECT_NEAR(q.t_map(q.make_surrogate(0.0))(0, 0), 1.0, 1e-15);
  EXPECT_THROW(q.t_map(q.make_surrogate(1.5)), DomainError);
}

TEST(PoissonTMap, MatchesGoldenSection) {
  PoissonEMSpec s;
  s.lambda = 0.8;
  s.mean_z = 3.0;
  const PoissonEM p(s);
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const double v = -5.0 * rng.uniform();
    const double ref = oracle::grid_golden_min([&](double t) { return (s.lambda - v) * std::exp(t) - t * s.mean_z; }, -20, 20);
    ASSERT_NEAR(p.t_map(p.make_surrogate(v))(0, 0), ref, 1e-6);
  }
}

TEST(GmmTMap, MatchesSeparableGoldenSection) {
  GmmEMSpec gs;
  gs.weights = {0.3, 0.7};
  gs.covariances.assign(2, Eigen::MatrixXd::Identity(1, 1));
  gs.lambda = 0.5;
  gs.mean_z = Eigen::VectorXd::Constant(1, -0.6);
  const GmmEM gmm(gs);
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    SurrogateVector s(gmm.surrogate_layout());
    s.block(0)(0, 0) = 2.0 * rng.normal();
    s.block(1)(0, 0) = rng.uniform();
    const double s1 = s.block(0)(0, 0), s2 = s.block(1)(0, 0);
    const ModelParam th = gmm.t_map(s);
    const double m1 = oracle::grid_golden_min([&](double m) { return 0.25 * m * m - s1 * m + 0.5 * s2 * m * m; }, -50, 50);
    const double m2 = oracle::grid_golden_min(
        [&](double m) { return 0.25 * m * m - (-0.6 - s1) * m + 0.5 * (1.0 - s2) * m * m; }, -50, 50);
    ASSERT_NEAR(th(0, 0), m1, 1e-6);
    ASSERT_NEAR(th(0, 1), m2, 1e-6);
  }
  SurrogateVector bad(gmm.surrogate_layout());
  bad.block(1)(0, 0) = 1.5;
  EXPECT_THROW(gmm.t_map(bad), DomainError);
  EXPECT_FALSE(gmm.in_surrogate_set(bad));
  EXPECT_TRUE(gmm.in_surrogate_set(gmm.project(bad, Geometry::identity)));
}

TEST(GmmEM, ResponsibilitiesSumToOneAndRejectBadCovariance) {
  GmmEMSpec gs;
  gs.weights = {0.2, 0.5, 0.3};
  gs.covariances = {Eigen::MatrixXd::Identity(2, 2), 2.0 * Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
  gs.mean_z = Eigen::VectorXd::Zero(2);
  const GmmEM gmm(gs);
  Rng rng(10);
  const ModelParam th = random_matrix(2, 3, rng);
  const Eigen::VectorXd r = gmm.responsibilities(Eigen::VectorXd::Constant(2, 40.0), th);
  EXPECT_NEAR(r.sum(), 1.0, 1e-14);
  EXPECT_TRUE(r.allFinite());
  gs.covariances[0](0, 0) = -1.0;
  EXPECT_THROW(GmmEM{gs}, Error);
}

TEST(RemarkOne, TMapAndObjective) {
  const Remark1Problem r;
  EXPECT_NEAR(r.t_map(r.make_surrogate(2.5))(0, 0), 0.6324555320336759, 1e-15);
  EXPECT_THROW(r.t_map(r.make_surrogate(0.0)), DomainError);
  const Dataset d = column({1.0, 4.0});
  const ModelParam star = ModelParam::Constant(1, 1, 1.0 / std::sqrt(2.5));
  EXPECT_NEAR(objective(r, d, star), 2.0 * std::sqrt(2.5), 1e-12);
  const std::vector<double> means{1.0, 4.0}, w{0.5, 0.5};
  EXPECT_NEAR(Remark1Problem::optimum(means, w), 1.0 / std::sqrt(2.5), 1e-15);
  EXPECT_NEAR(Remark1Problem::theta_space_limit(means, w), 0.75, 1e-15);
}

TEST(Objective, DictionaryAtZeroAndPoissonPointMass) {
  Rng rng(11);
  const auto dd = datasets::gen_synthetic_dict(4, 3, 30, 0.34, rng);
  const auto dl = dict(4, 3);
  const double half_sq = 0.5 * dd.data.rows().rowwise().squaredNorm().mean();
  EXPECT_NEAR(objective(dl, dd.data, ModelParam::Zero(4, 3)), half_sq, 1e-12);

  PoissonEMSpec s;
  s.lambda = 1.0;
  s.mean_z = 1.0;
  const PoissonEM p(s);
  EXPECT_NEAR(objective(p, column({1.0}), ModelParam::Zero(1, 1)), 2.0, 1e-14);
  EXPECT_THROW(PoissonEM::validate_counts(column({1.5})), DomainError);
}

TEST(Quadratic, RejectsStepAboveInverseLipschitz) {
  QuadSurrogateSpec qs;
  qs.dim = 2;
  qs.rho = 2.0;
  qs.lipschitz = 1.0;
  EXPECT_THROW(QuadSurrogate<CenteredQuadraticLoss>{qs}, ConfigError);
}

TEST(Quadratic, MirrorSequenceIsProximalGradient) {
  Rng rng(12);
  RowMatrix m = random_matrix(40, 6, rng);
  const Dataset d(m, "lasso");
  QuadSurrogateSpec qs;
  qs.dim = 5;
  qs.rho = 1.0 / LeastSquaresLoss::lipschitz(d);
  qs.reg = Regularizer::l1(0.05);
  const QuadSurrogate<LeastSquaresLoss> q(qs);
  const Eigen::MatrixXd a = m.leftCols(5);
  const Eigen::VectorXd b = m.col(5);
  Eigen::VectorXd th = Eigen::VectorXd::Zero(5);
  ModelParam mirror = th;
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd v = th - qs.rho * (a.transpose() * (a * th - b) / 40.0);
    th = v.unaryExpr([&](double x) { return soft_threshold(x, qs.rho * 0.05); });
    mirror = mm_step_theta(q, d, mirror);
    ASSERT_LE((mirror.col(0) - th).norm(), 1e-12) << "step " << t;
  }
}

TEST(Projection, PsdClip) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
  a(0, 0) = 1.0;
  a(1, 1) = -1.0;
  const Eigen::MatrixXd pa = psd_project(a);
  EXPECT_NEAR(pa(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(pa(1, 1), 0.0, 1e-15);
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const auto n = static_cast<Eigen::Index>(2 + rng.uniform_index(6));
    const Eigen::MatrixXd b = random_matrix(n, n, rng);
    const Eigen::MatrixXd psd = b * b.transpose();
    ASSERT_LE((psd_project(psd) - psd).norm(), 1e-12);
    const Eigen::MatrixXd sym = b + b.transpose();
    const Eigen::MatrixXd once = psd_project(sym);
    ASSERT_LE((once - oracle::psd_clip_extended(sym)).norm(), 1e-10);
    ASSERT_LE((psd_project(once) - once).norm(), 1e-12);
    ASSERT_GE(min_symmetric_eigenvalue(once), -1e-12);
  }
}

TEST(Projection, ProblemProjectionsAreIdempotent) {
  const auto dl = dict(3, 2);
  Rng rng(14);
  const SurrogateVector s = dl.make_surrogate(random_matrix(2, 2, rng), random_matrix(3, 2, rng));
  const SurrogateVector once = dl.project(s, Geometry::identity);
  EXPECT_TRUE(dl.in_surrogate_set(once));
  EXPECT_LE((dl.project(once, Geometry::identity) - once).norm(), 1e-12);
  EXPECT_LE((Eigen::MatrixXd(once.block(1)) - Eigen::MatrixXd(s.block(1))).norm(), 0.0);
  EXPECT_THROW(dl.project(s, Geometry::problem), DomainError);

  PoissonEMSpec ps;
  ps.bound_m = 10.0;
  const PoissonEM p(ps);
  EXPECT_EQ(p.project(p.make_surrogate(3.0), Geometry::problem).data()[0], 0.0);
  EXPECT_EQ(p.project(p.make_surrogate(-30.0), Geometry::identity).data()[0], -10.0);

  Eigen::VectorXd v(3);
  v << 0.9, 0.6, -0.2;
  const Eigen::VectorXd sv = project_capped_simplex(v);
  EXPECT_GE(sv.minCoeff(), 0.0);
  EXPECT_LE(sv.sum(), 1.0 + 1e-15);
  EXPECT_LE((project_capped_simplex(sv) - sv).norm(), 1e-15);
}
