#pragma once

// Quadratic-surrogate MM: for f with L_f-Lipschitz gradient and rho <= 1/L_f,
//   psi = ||theta||^2 / (2 rho),  phi = theta / rho,  S̄(z, tau) = tau - rho G(z, tau),
//   T(s) = prox_{rho g}(s).
// The deterministic theta-space iteration is proximal gradient descent.

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <utility>

#include "fedmm/core/dataset.hpp"
#include "fedmm/core/errors.hpp"
#include "fedmm/core/problem.hpp"
#include "fedmm/core/surrogate.hpp"
#include "fedmm/problems/prox.hpp"

namespace fedmm::problems {

/// l(z, theta) = 1/2 (a'theta - b)^2 with z = (a, b).
struct LeastSquaresLoss {
  static Eigen::Index param_dim(Eigen::Index data_dim) { return data_dim - 1; }
  static double value(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::VectorXd& theta) {
    const Eigen::Index d = theta.size();
    const double r = z.head(d).dot(theta) - z[d];
    return 0.5 * r * r;
  }
  static Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::VectorXd& theta) {
    const Eigen::Index d = theta.size();
    return z.head(d) * (z.head(d).dot(theta) - z[d]);
  }
  /// Smoothness constant of the empirical loss: top eigenvalue of mean a a'.
  static double lipschitz(const Dataset& data) {
    const Eigen::Index d = data.dim() - 1;
    const Eigen::MatrixXd a = data.rows().leftCols(d);
    const Eigen::MatrixXd cov = a.transpose() * a / static_cast<double>(data.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().maxCoeff();
  }
};

/// l(z, theta) = 1/2 ||theta - z||^2.
struct CenteredQuadraticLoss {
  static Eigen::Index param_dim(Eigen::Index data_dim) { return data_dim; }
  static double value(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::VectorXd& theta) {
    return 0.5 * (theta - z).squaredNorm();
  }
  static Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::VectorXd>& z, const Eigen::VectorXd& theta) {
    return theta - z;
  }
  static double lipschitz(const Dataset&) { return 1.0; }
};

struct QuadSurrogateSpec {
  Eigen::Index dim = 1;  ///< parameter dimension d
  double rho = 1.0;
  Regularizer reg = Regularizer::none();
  std::optional<double> lipschitz;  ///< L_f; validated against rho when present
};

template <class Loss>
class QuadSurrogate {
 public:
  explicit QuadSurrogate(QuadSurrogateSpec spec) : spec_(std::move(spec)) {
    if (spec_.dim <= 0) throw ConfigError("problem.dim", "must be positive");
    if (!(spec_.rho > 0.0)) throw ConfigError("problem.rho", "must be > 0");
    if (spec_.lipschitz && spec_.rho > 1.0 / *spec_.lipschitz * (1.0 + 1e-12)) {
      throw ConfigError("problem.rho", "must not exceed 1/L_f = " + std::to_string(1.0 / *spec_.lipschitz));
    }
  }

  const QuadSurrogateSpec& spec() const noexcept { return spec_; }
  std::string name() const { return "quadratic"; }
  Layout surrogate_layout() const { return Layout::flat(spec_.dim); }
  std::pair<Eigen::Index, Eigen::Index> param_shape() const { return {spec_.dim, 1}; }

  SurrogateVector make_surrogate(const Eigen::VectorXd& v) const {
    return SurrogateVector(surrogate_layout(), v);
  }

  ModelParam t_map(const SurrogateVector& s) const { return spec_.reg.prox(spec_.rho, s.data()); }

  SurrogateVector oracle(const Dataset& data, std::span<const std::size_t> batch,
                         const ModelParam& theta, Rng& /*rng*/) const {
    if (batch.empty()) throw DomainError("quadratic oracle: empty batch");
    const Eigen::VectorXd tau = theta.col(0);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(spec_.dim);
    for (std::size_t i : batch) {
      grad += Loss::gradient(data.row(static_cast<Eigen::Index>(i)).transpose(), tau);
    }
    grad /= static_cast<double>(batch.size());
    return make_surrogate(tau - spec_.rho * grad);
  }

  SurrogateVector exact_sbar(const Dataset& data, const ModelParam& theta) const {
    Rng unused;
    const auto idx = all_rows(data);
    return oracle(data, idx, theta, unused);
  }

  double loss(const Dataset& data, const ModelParam& theta) const {
    if (data.empty()) return 0.0;
    const Eigen::VectorXd th = theta.col(0);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) acc += Loss::value(data.row(i).transpose(), th);
    return acc / static_cast<double>(data.size());
  }

  double penalty(const ModelParam& theta) const { return spec_.reg.value(theta); }

  double psi(const ModelParam& theta) const { return theta.squaredNorm() / (2.0 * spec_.rho); }
  Vector phi(const ModelParam& theta) const { return theta.col(0) / spec_.rho; }

  bool supports_geometry(Geometry) const { return true; }
  /// S = R^d.
  SurrogateVector project(const SurrogateVector& s, Geometry) const { return s; }
  bool in_surrogate_set(const SurrogateVector& s) const {
    return s.size() == spec_.dim && s.all_finite();
  }

 private:
  QuadSurrogateSpec spec_;
};

static_assert(HasSurrogateFunctions<QuadSurrogate<LeastSquaresLoss>>);

}  // namespace fedmm::problems
