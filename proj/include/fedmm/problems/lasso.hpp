#pragma once

// Sparse coding:  argmin_h ||z - theta h||^2 + lambda ||h||_1.
//
// Accelerated proximal gradient (FISTA with gradient-based restart) on the
// halved objective 1/2 h'Gh - c'h + lambda/2 ||h||_1, G = theta'theta,
// c = theta'z. Every `polish_every` iterations the current support and signs
// are used to solve the reduced normal equations; the polished point is kept
// when its signs agree and it meets the KKT tolerance, which turns the linear
// tail of FISTA into an exact finish. When FISTA stalls on nearly collinear
// columns, a feature-sign active-set search finishes the solve.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "fedmm/core/errors.hpp"
#include "fedmm/problems/prox.hpp"

namespace fedmm::problems {

struct LassoConfig {
  std::size_t max_iter = 10000;
  double kkt_tol = 1e-8;
  std::size_t power_iterations = 20;
  std::size_t polish_every = 10;
};

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
inline double power_iteration_max_eig(const Eigen::MatrixXd& g, std::size_t iters) {
  const Eigen::Index k = g.rows();
  if (k == 0) return 0.0;
  Eigen::VectorXd v(k);
  for (Eigen::Index i = 0; i < k; ++i) v[i] = 1.0 + 0.1 * static_cast<double>(i % 7);
  v.normalize();
  double est = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    Eigen::VectorXd w = g * v;
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    est = v.dot(w);
    v = w / n;
  }
  return std::max(est, v.dot(g * v));
}

/// Max over coordinates of the violation of the subgradient optimality
/// condition 0 in 2 theta'(theta h - z) + lambda d||h||_1.
inline double lasso_kkt_residual(const Eigen::MatrixXd& gram, const Eigen::VectorXd& c,
                                 double lambda, const Eigen::VectorXd& h) {
  const Eigen::VectorXd grad = 2.0 * (gram * h - c);
  double r = 0.0;
  for (Eigen::Index j = 0; j < h.size(); ++j) {
    const double v = h[j] != 0.0 ? std::abs(grad[j] + lambda * (h[j] > 0 ? 1.0 : -1.0))
                                 : std::max(0.0, std::abs(grad[j]) - lambda);
    r = std::max(r, v);
  }
  return r;
}

/// Solver bound to one dictionary; reuses theta'theta across data.
class LassoSolver {
 public:
  LassoSolver(const Eigen::MatrixXd& theta, double lambda, LassoConfig cfg = {})
      : theta_(theta), gram_(theta.transpose() * theta), lambda_(lambda), cfg_(cfg) {
    if (!(lambda >= 0.0)) throw DomainError("lasso penalty must be >= 0");
    const double est = power_iteration_max_eig(gram_, cfg_.power_iterations);
    // The power estimate is a lower bound; pad it and cap by the Frobenius
    // norm, which bounds the top eigenvalue from above.
    lipschitz_ = std::min(1.05 * est, gram_.norm());
    if (lipschitz_ <= 0.0) lipschitz_ = gram_.norm();
  }

  const Eigen::MatrixXd& gram() const noexcept { return gram_; }
  double lambda() const noexcept { return lambda_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& z) const {
    const Eigen::Index k = theta_.cols();
    const Eigen::VectorXd c = theta_.transpose() * z;
    Eigen::VectorXd h = Eigen::VectorXd::Zero(k);
    if (lipschitz_ <= 0.0 || c.cwiseAbs().maxCoeff() * 2.0 <= lambda_) {
      // h = 0 satisfies the KKT conditions.
      if (lasso_kkt_residual(gram_, c, lambda_, h) <= cfg_.kkt_tol) return h;
    }
    const double step = 1.0 / lipschitz_;
    const double thresh = 0.5 * lambda_ * step;
    Eigen::VectorXd y = h;
    Eigen::VectorXd h_new(k);
    double t = 1.0;
    double residual = lasso_kkt_residual(gram_, c, lambda_, h);
    std::size_t it = 0;
    for (; it < cfg_.max_iter; ++it) {
      const Eigen::VectorXd grad = gram_ * y - c;
      h_new = (y - step * grad).unaryExpr([thresh](double x) { return soft_threshold(x, thresh); });
      const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      if ((y - h_new).dot(h_new - h) > 0.0) {
        // Momentum points uphill: restart.
        y = h_new;
        t = 1.0;
      } else {
        y = h_new + ((t - 1.0) / t_new) * (h_new - h);
        t = t_new;
      }
      h.swap(h_new);
      if ((it + 1) % cfg_.polish_every == 0 || it + 1 == cfg_.max_iter) {
        residual = lasso_kkt_residual(gram_, c, lambda_, h);
        if (residual <= cfg_.kkt_tol) return h;
        if (auto polished = polish(c, h)) return *polished;
        if ((it + 1) % 500 == 0) {
          if (auto exact = feature_sign(c, Eigen::VectorXd::Zero(k))) return *exact;
          if (auto exact = feature_sign(c, h)) return *exact;
        }
      }
    }
    residual = lasso_kkt_residual(gram_, c, lambda_, h);
    if (residual <= cfg_.kkt_tol) return h;
    throw SolverDivergence("lasso coding did not reach the KKT tolerance", it, residual);
  }

 private:
  std::optional<Eigen::VectorXd> polish(const Eigen::VectorXd& c, const Eigen::VectorXd& h) const {
    std::vector<Eigen::Index> support;
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      if (h[j] != 0.0) support.push_back(j);
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(h.size());
    if (!support.empty()) {
      const auto m = static_cast<Eigen::Index>(support.size());
      Eigen::VectorXd rhs(m);
      for (Eigen::Index a = 0; a < m; ++a) rhs[a] = c[support[a]] - 0.5 * lambda_ * (h[support[a]] > 0 ? 1.0 : -1.0);
      const Eigen::VectorXd x = solve_support(support, rhs);
      if (!x.allFinite()) return std::nullopt;
      for (Eigen::Index a = 0; a < m; ++a) {
        if (x[a] * h[support[a]] <= 0.0) return std::nullopt;
        out[support[a]] = x[a];
      }
    }
    if (lasso_kkt_residual(gram_, c, lambda_, out) <= cfg_.kkt_tol) return out;
    return std::nullopt;
  }

  double objective(const Eigen::VectorXd& c, const Eigen::VectorXd& x) const {
    return x.dot(gram_ * x) - 2.0 * c.dot(x) + lambda_ * x.lpNorm<1>();
  }

  Eigen::VectorXd solve_support(const std::vector<Eigen::Index>& support, const Eigen::VectorXd& rhs) const {
    const auto m = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd ga(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) ga(a, b) = gram_(support[a], support[b]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ga);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 1e-12 * ga.norm()) {
      return ldlt.solve(rhs);
    }
    return ga.completeOrthogonalDecomposition().solve(rhs);
  }

  /// Feature-sign active-set search started from x0; exact in finitely many
  /// steps, and robust to near-duplicate dictionary columns where the first
  /// order iteration stalls.
  std::optional<Eigen::VectorXd> feature_sign(const Eigen::VectorXd& c, const Eigen::VectorXd& x0) const {
    const Eigen::Index k = x0.size();
    Eigen::VectorXd x = x0;
    Eigen::VectorXd sign = x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    const double tol = 0.1 * cfg_.kkt_tol;
    for (Eigen::Index outer = 0; outer < 4 * k + 20; ++outer) {
      Eigen::VectorXd grad = 2.0 * (gram_ * x - c);
      Eigen::Index pick = -1;
      double best = lambda_ + tol;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (sign[j] == 0.0 && std::abs(grad[j]) > best) {
          best = std::abs(grad[j]);
          pick = j;
        }
      }
      if (pick >= 0) sign[pick] = grad[pick] > 0.0 ? -1.0 : 1.0;
      for (Eigen::Index inner = 0; inner < 4 * k + 20; ++inner) {
        std::vector<Eigen::Index> support;
        for (Eigen::Index j = 0; j < k; ++j) {
          if (sign[j] != 0.0) support.push_back(j);
        }
        if (support.empty()) break;
        const auto m = static_cast<Eigen::Index>(support.size());
        Eigen::VectorXd rhs(m);
        for (Eigen::Index a = 0; a < m; ++a) rhs[a] = c[support[a]] - 0.5 * lambda_ * sign[support[a]];
        const Eigen::VectorXd xa = solve_support(support, rhs);
        if (!xa.allFinite()) return std::nullopt;
        Eigen::VectorXd target = Eigen::VectorXd::Zero(k);
        for (Eigen::Index a = 0; a < m; ++a) target[support[a]] = xa[a];
        // Discrete line search over the target and every zero crossing on the segment.
        Eigen::VectorXd next = target;
        double fnext = objective(c, target);
        for (Eigen::Index a = 0; a < m; ++a) {
          const Eigen::Index j = support[a];
          if (x[j] != 0.0 && target[j] * x[j] < 0.0) {
            const double step = x[j] / (x[j] - target[j]);
            Eigen::VectorXd cand = x + step * (target - x);
            cand[j] = 0.0;
            const double fc = objective(c, cand);
            if (fc < fnext) {
              fnext = fc;
              next = cand;
            }
          }
        }
        x = next;
        sign = x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
        grad = 2.0 * (gram_ * x - c);
        bool optimal_nonzero = true;
        for (Eigen::Index j = 0; j < k; ++j) {
          if (x[j] != 0.0 && std::abs(grad[j] + lambda_ * sign[j]) > tol) optimal_nonzero = false;
        }
        if (optimal_nonzero) break;
      }
      if (lasso_kkt_residual(gram_, c, lambda_, x) <= cfg_.kkt_tol) return x;
    }
    return std::nullopt;
  }

  Eigen::MatrixXd theta_;
  Eigen::MatrixXd gram_;
  double lambda_;
  LassoConfig cfg_;
  double lipschitz_ = 0.0;
};

inline Eigen::VectorXd lasso_code(const Eigen::VectorXd& z, const Eigen::MatrixXd& theta,
                                  double lambda, const LassoConfig& cfg = {}) {
  return LassoSolver(theta, lambda, cfg).solve(z);
}

/// ||z - theta h||^2 + lambda ||h||_1
inline double lasso_objective(const Eigen::VectorXd& z, const Eigen::MatrixXd& theta, double lambda,
                              const Eigen::VectorXd& h) {
  return (z - theta * h).squaredNorm() + lambda * h.cwiseAbs().sum();
}

}  // namespace fedmm::problems
