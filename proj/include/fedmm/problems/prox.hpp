#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>

#include "fedmm/core/errors.hpp"

namespace fedmm::problems {

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

/// Penalty g for the quadratic-surrogate problem, with its proximal map.
class Regularizer {
 public:
  enum class Kind { none, l1, box };

  static Regularizer none() { return Regularizer(Kind::none, 0.0, 0.0, 0.0); }
  static Regularizer l1(double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("regularizer.lambda", "must be >= 0");
    return Regularizer(Kind::l1, lambda, 0.0, 0.0);
  }
  static Regularizer box(double lo, double hi) {
    if (!(lo <= hi)) throw ConfigError("regularizer", "box requires lo <= hi");
    return Regularizer(Kind::box, 0.0, lo, hi);
  }

  Kind kind() const noexcept { return kind_; }
  double lambda() const noexcept { return lambda_; }
  double lower() const noexcept { return lo_; }
  double upper() const noexcept { return hi_; }

  double value(const Eigen::MatrixXd& theta) const {
    switch (kind_) {
      case Kind::none:
        return 0.0;
      case Kind::l1:
        return lambda_ * theta.cwiseAbs().sum();
      case Kind::box:
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
          const double v = theta.data()[i];
          if (v < lo_ || v > hi_) return std::numeric_limits<double>::infinity();
        }
        return 0.0;
    }
    return 0.0;
  }

  /// argmin_x  rho * g(x) + 1/2 ||x - v||^2
  Eigen::MatrixXd prox(double rho, const Eigen::MatrixXd& v) const {
    if (!(rho > 0.0)) throw DomainError("prox step must be positive");
    switch (kind_) {
      case Kind::none:
        return v;
      case Kind::l1:
        return v.unaryExpr([t = rho * lambda_](double x) { return soft_threshold(x, t); });
      case Kind::box:
        return v.cwiseMax(lo_).cwiseMin(hi_);
    }
    return v;
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::none:
        return "none";
      case Kind::l1:
        return "l1(" + std::to_string(lambda_) + ")";
      case Kind::box:
        return "box[" + std::to_string(lo_) + "," + std::to_string(hi_) + "]";
    }
    return "?";
  }

 private:
  Regularizer(Kind k, double lambda, double lo, double hi) : kind_(k), lambda_(lambda), lo_(lo), hi_(hi) {}
  Kind kind_;
  double lambda_;
  double lo_;
  double hi_;
};

}  // namespace fedmm::problems
