#pragma once

// Penalized ML for the means of a Gaussian mixture with known weights and
// covariances, as a Jensen-surrogate (EM) problem.
//
// theta = (m_1, ..., m_L) as a p x L matrix. The sufficient statistic keeps
// the first L-1 components only, the last one follows from the constraint
// sum_l 1{h = l} = 1:
//   block 0 (p x (L-1)):  z 1{h = l}
//   block 1 ((L-1) x 1):  1{h = l}
// T(s) is block-wise: (s2_l I + lambda Gamma_l)^{-1} s1_l for l < L and
// ((1 - sum s2) I + lambda Gamma_L)^{-1} (E_pi[Z] - sum s1) for the last mean.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedmm/core/dataset.hpp"
#include "fedmm/core/errors.hpp"
#include "fedmm/core/problem.hpp"
#include "fedmm/core/surrogate.hpp"
#include "fedmm/problems/projection.hpp"

namespace fedmm::problems {

struct GmmEMSpec {
  std::vector<double> weights;               ///< nu, open simplex
  std::vector<Eigen::MatrixXd> covariances;  ///< Gamma_l, SPD
  double lambda = 0.1;                       ///< ridge on the means
  Eigen::VectorXd mean_z;                    ///< E_pi[Z] over the pooled data
};

class GmmEM {
 public:
  explicit GmmEM(GmmEMSpec spec) : spec_(std::move(spec)) {
    const std::size_t l = spec_.weights.size();
    if (l < 2) throw ConfigError("problem.weights", "need at least two components");
    if (spec_.covariances.size() != l) throw ConfigError("problem.covariances", "one per component");
    if (!(spec_.lambda > 0.0)) throw ConfigError("problem.lambda", "must be > 0");
    p_ = spec_.mean_z.size();
    if (p_ == 0) throw ConfigError("problem.mean_z", "dimension must be positive");
    double total = 0.0;
    for (double w : spec_.weights) {
      if (!(w > 0.0)) throw ConfigError("problem.weights", "must be in the open simplex");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("problem.weights", "must sum to 1");
    for (std::size_t k = 0; k < l; ++k) {
      const Eigen::MatrixXd& g = spec_.covariances[k];
      if (g.rows() != p_ || g.cols() != p_) throw ConfigError("problem.covariances", "shape mismatch");
      if (!g.isApprox(g.transpose(), 1e-12)) throw ConfigError("problem.covariances", "not symmetric");
      Eigen::LLT<Eigen::MatrixXd> llt(g);
      if (llt.info() != Eigen::Success) throw ConfigError("problem.covariances", "not positive definite");
      inverses_.push_back(llt.solve(Eigen::MatrixXd::Identity(p_, p_)));
      const Eigen::MatrixXd lmat = llt.matrixL();
      // log of nu_l / sqrt(det Gamma_l)
      log_norm_.push_back(std::log(spec_.weights[k]) - lmat.diagonal().array().log().sum());
    }
    const auto lm1 = static_cast<Eigen::Index>(l - 1);
    layout_ = Layout{Block{p_, lm1, false}, Block{lm1, 1, false}};
  }

  const GmmEMSpec& spec() const noexcept { return spec_; }
  std::size_t components() const noexcept { return spec_.weights.size(); }
  std::string name() const { return "gmm"; }
  Layout surrogate_layout() const { return layout_; }
  std::pair<Eigen::Index, Eigen::Index> param_shape() const {
    return {p_, static_cast<Eigen::Index>(components())};
  }

  /// Posterior responsibilities r_l(z, theta), log-sum-exp stabilized.
  Eigen::VectorXd responsibilities(const Eigen::VectorXd& z, const ModelParam& theta) const {
    const std::size_t l = components();
    Eigen::VectorXd logp(static_cast<Eigen::Index>(l));
    for (std::size_t k = 0; k < l; ++k) {
      const Eigen::VectorXd d = z - theta.col(static_cast<Eigen::Index>(k));
      logp[static_cast<Eigen::Index>(k)] = log_norm_[k] - 0.5 * d.dot(inverses_[k] * d);
    }
    const double mx = logp.maxCoeff();
    Eigen::VectorXd r = (logp.array() - mx).exp().matrix();
    return r / r.sum();
  }

  ModelParam t_map(const SurrogateVector& s) const {
    const std::size_t l = components();
    const Eigen::Index lm1 = static_cast<Eigen::Index>(l - 1);
    const auto s1 = s.block(0);
    const auto s2 = s.block(1);
    const double rest = 1.0 - s2.sum();
    if (s2.minCoeff() < -1e-12 || rest < -1e-12) {
      throw DomainError("gmm T map: weight statistics leave the capped simplex");
    }
    ModelParam theta(p_, static_cast<Eigen::Index>(l));
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(p_, p_);
    for (Eigen::Index k = 0; k < lm1; ++k) {
      Eigen::MatrixXd a = s2(k, 0) * eye + spec_.lambda * spec_.covariances[static_cast<std::size_t>(k)];
      theta.col(k) = a.llt().solve(s1.col(k));
    }
    Eigen::MatrixXd a = rest * eye + spec_.lambda * spec_.covariances[l - 1];
    const Eigen::VectorXd rhs = spec_.mean_z - s1.rowwise().sum();
    theta.col(lm1) = a.llt().solve(rhs);
    return theta;
  }

  SurrogateVector oracle(const Dataset& data, std::span<const std::size_t> batch,
                         const ModelParam& theta, Rng& /*rng*/) const {
    if (batch.empty()) throw DomainError("gmm oracle: empty batch");
    const Eigen::Index lm1 = static_cast<Eigen::Index>(components() - 1);
    SurrogateVector out(layout_);
    auto s1 = out.block(0);
    auto s2 = out.block(1);
    for (std::size_t i : batch) {
      const Eigen::VectorXd z = data.row(static_cast<Eigen::Index>(i)).transpose();
      const Eigen::VectorXd r = responsibilities(z, theta);
      for (Eigen::Index k = 0; k < lm1; ++k) {
        s1.col(k) += r[k] * z;
        s2(k, 0) += r[k];
      }
    }
    out *= 1.0 / static_cast<double>(batch.size());
    return out;
  }

  SurrogateVector exact_sbar(const Dataset& data, const ModelParam& theta) const {
    Rng unused;
    const auto idx = all_rows(data);
    return oracle(data, idx, theta, unused);
  }

  double loss(const Dataset& data, const ModelParam& theta) const {
    if (data.empty()) return 0.0;
    const std::size_t l = components();
    double acc = 0.0;
    std::vector<double> logp(l);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const Eigen::VectorXd z = data.row(i).transpose();
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l; ++k) {
        const Eigen::VectorXd d = z - theta.col(static_cast<Eigen::Index>(k));
        logp[k] = log_norm_[k] - 0.5 * d.dot(inverses_[k] * d);
        mx = std::max(mx, logp[k]);
      }
      double total = 0.0;
      for (double v : logp) total += std::exp(v - mx);
      acc -= mx + std::log(total);
    }
    return acc / static_cast<double>(data.size());
  }

  double penalty(const ModelParam& theta) const { return 0.5 * spec_.lambda * theta.squaredNorm(); }

  double psi(const ModelParam& theta) const {
    const std::size_t l = components();
    const Eigen::VectorXd ml = theta.col(static_cast<Eigen::Index>(l - 1));
    const Eigen::VectorXd gm = inverses_[l - 1] * ml;
    return -gm.dot(spec_.mean_z) + 0.5 * ml.dot(gm);
  }

  Vector phi(const ModelParam& theta) const {
    const std::size_t l = components();
    const Eigen::Index lm1 = static_cast<Eigen::Index>(l - 1);
    const Eigen::VectorXd ml = theta.col(lm1);
    const Eigen::VectorXd gml = inverses_[l - 1] * ml;
    const double ql = ml.dot(gml);
    SurrogateVector out(layout_);
    for (Eigen::Index k = 0; k < lm1; ++k) {
      const Eigen::VectorXd mk = theta.col(k);
      const Eigen::VectorXd gmk = inverses_[static_cast<std::size_t>(k)] * mk;
      out.block(0).col(k) = gmk - gml;
      out.block(1)(k, 0) = -0.5 * (mk.dot(gmk) - ql);
    }
    return out.data();
  }

  bool supports_geometry(Geometry g) const { return g == Geometry::identity; }

  /// Euclidean projection: weight statistics onto the capped simplex.
  SurrogateVector project(const SurrogateVector& s, Geometry g) const {
    if (g != Geometry::identity) throw DomainError("gmm: only the identity geometry is available");
    SurrogateVector out = s;
    out.block(1) = project_capped_simplex(Eigen::VectorXd(s.block(1)));
    return out;
  }

  bool in_surrogate_set(const SurrogateVector& s) const {
    if (!(s.layout() == layout_) || !s.all_finite()) return false;
    const auto s2 = s.block(1);
    return s2.minCoeff() >= -1e-12 && s2.sum() <= 1.0 + 1e-12;
  }

 private:
  GmmEMSpec spec_;
  Eigen::Index p_ = 0;
  std::vector<Eigen::MatrixXd> inverses_;
  std::vector<double> log_norm_;
  Layout layout_;
};

static_assert(HasSurrogateFunctions<GmmEM>);

}  // namespace fedmm::problems
