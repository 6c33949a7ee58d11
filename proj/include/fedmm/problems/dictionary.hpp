#pragma once

// Sparse dictionary learning as a variational-surrogate MM problem.
//
// Objective (reported):
//   1/2 * ( E_pi[ min_h ||z - theta h||^2 + lambda ||h||_1 ] + eta ||theta||_F^2 ).
// With S(z, h) = (h h', z h') and phi(theta) = (-1/2 theta'theta, theta),
// psi = 0 and g = eta/2 ||theta||^2, the minimizer map is
//   T(s) = s2 (s1 + eta I)^{-1}.
// The surrogate space is PSD(K) x R^{p x K}; blocks are stored as s1 (K x K)
// followed by s2 (p x K).

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "fedmm/core/dataset.hpp"
#include "fedmm/core/errors.hpp"
#include "fedmm/core/problem.hpp"
#include "fedmm/core/rng.hpp"
#include "fedmm/core/surrogate.hpp"
#include "fedmm/problems/lasso.hpp"
#include "fedmm/problems/projection.hpp"

namespace fedmm::problems {

struct DictLearnSpec {
  Eigen::Index p = 0;
  Eigen::Index k = 0;
  double lambda = 0.1;  ///< code penalty
  double eta = 0.2;     ///< dictionary ridge
  LassoConfig lasso{};
  double psd_tol = 1e-10;
};

class DictionaryLearning {
 public:
  explicit DictionaryLearning(DictLearnSpec spec) : spec_(spec) {
    if (spec_.p <= 0 || spec_.k <= 0) throw ConfigError("problem.K", "dimensions must be positive");
    if (!(spec_.eta > 0.0)) throw ConfigError("problem.eta", "must be > 0 for a unique minimizer");
    if (!(spec_.lambda >= 0.0)) throw ConfigError("problem.lambda", "must be >= 0");
    layout_ = Layout{Block{spec_.k, spec_.k, true}, Block{spec_.p, spec_.k, false}};
  }

  const DictLearnSpec& spec() const noexcept { return spec_; }
  std::string name() const { return "dictionary"; }
  Layout surrogate_layout() const { return layout_; }
  std::pair<Eigen::Index, Eigen::Index> param_shape() const { return {spec_.p, spec_.k}; }

  SurrogateVector make_surrogate(const Eigen::MatrixXd& s1, const Eigen::MatrixXd& s2) const {
    SurrogateVector s(layout_);
    s.block(0) = s1;
    s.block(1) = s2;
    return s;
  }

  /// T(s) = s2 (s1 + eta I)^{-1}, via an SPD solve of (s1 + eta I) X = s2'.
  ModelParam t_map(const SurrogateVector& s) const {
    const Eigen::MatrixXd s1 = s.block(0);
    if (min_symmetric_eigenvalue(s1) < -spec_.psd_tol) {
      throw DomainError("dictionary T map: first surrogate block is not PSD");
    }
    Eigen::MatrixXd a = 0.5 * (s1 + s1.transpose());
    a.diagonal().array() += spec_.eta;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw DomainError("dictionary T map: s1 + eta I is not SPD");
    return llt.solve(Eigen::MatrixXd(s.block(1).transpose())).transpose();
  }

  /// Minibatch oracle b^{-1} sum (H H', z H') with H the lasso code of z.
  SurrogateVector oracle(const Dataset& data, std::span<const std::size_t> batch,
                         const ModelParam& theta, Rng& /*rng*/) const {
    if (batch.empty()) throw DomainError("dictionary oracle: empty batch");
    const LassoSolver solver(theta, spec_.lambda, spec_.lasso);
    Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(spec_.k, spec_.k);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(spec_.p, spec_.k);
    for (std::size_t i : batch) {
      const Eigen::VectorXd z = data.row(static_cast<Eigen::Index>(i)).transpose();
      const Eigen::VectorXd h = solver.solve(z);
      s1.selfadjointView<Eigen::Lower>().rankUpdate(h);
      s2.noalias() += z * h.transpose();
    }
    s1 = s1.selfadjointView<Eigen::Lower>();
    const double inv = 1.0 / static_cast<double>(batch.size());
    return make_surrogate(inv * s1, inv * s2);
  }

  SurrogateVector exact_sbar(const Dataset& data, const ModelParam& theta) const {
    Rng unused;
    const auto idx = all_rows(data);
    return oracle(data, idx, theta, unused);
  }

  /// 1/2 E_pi[ min_h ||z - theta h||^2 + lambda ||h||_1 ]
  double loss(const Dataset& data, const ModelParam& theta) const {
    if (data.empty()) return 0.0;
    const LassoSolver solver(theta, spec_.lambda, spec_.lasso);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const Eigen::VectorXd z = data.row(i).transpose();
      acc += lasso_objective(z, theta, spec_.lambda, solver.solve(z));
    }
    return 0.5 * acc / static_cast<double>(data.size());
  }

  double penalty(const ModelParam& theta) const { return 0.5 * spec_.eta * theta.squaredNorm(); }

  double psi(const ModelParam& /*theta*/) const { return 0.0; }

  Vector phi(const ModelParam& theta) const {
    SurrogateVector out = make_surrogate(-0.5 * theta.transpose() * theta, theta);
    return out.data();
  }

  bool supports_geometry(Geometry g) const { return g == Geometry::identity; }

  /// Euclidean projection: PSD clip on s1, s2 unconstrained.
  SurrogateVector project(const SurrogateVector& s, Geometry g) const {
    if (g != Geometry::identity) {
      throw DomainError("dictionary learning has no invertible problem geometry");
    }
    SurrogateVector out = s;
    out.block(0) = psd_project(s.block(0));
    return out;
  }

  bool in_surrogate_set(const SurrogateVector& s) const {
    if (!(s.layout() == layout_) || !s.all_finite()) return false;
    return min_symmetric_eigenvalue(s.block(0)) >= -spec_.psd_tol;
  }

 private:
  DictLearnSpec spec_;
  Layout layout_;
};

static_assert(HasSurrogateFunctions<DictionaryLearning>);

}  // namespace fedmm::problems
