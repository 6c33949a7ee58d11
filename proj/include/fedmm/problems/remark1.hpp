#pragma once

// Scalar toy problem  l(z, theta) = z theta + 1/theta,  theta > 0.
// psi(theta) = 1/theta, phi(theta) = -theta, S̄(z, theta) = z, T(s) = 1/sqrt(s).
// Aggregating surrogates recovers theta* = 1/sqrt(E[Z]); averaging the local
// minimizers 1/sqrt(E_i[Z]) does not.

#include <Eigen/Dense>

#include <algorithm>
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

namespace fedmm::problems {

struct Remark1Spec {
  std::vector<double> client_means;  ///< E_{pi_i}[Z], all > 0
  std::vector<double> weights;       ///< mu_i; uniform when empty
  double s_floor = 1e-12;            ///< S = [s_floor, inf)
};

class Remark1Problem {
 public:
  Remark1Problem() = default;
  explicit Remark1Problem(double s_floor) : s_floor_(s_floor) {
    if (!(s_floor > 0.0)) throw ConfigError("problem.s_floor", "must be > 0");
  }

  /// Validates a client-level description of the toy setup.
  static void validate(const Remark1Spec& spec) {
    if (spec.client_means.empty()) throw ConfigError("problem.client_means", "must be nonempty");
    for (double m : spec.client_means) {
      if (!(m > 0.0)) throw ConfigError("problem.client_means", "all means must be > 0");
    }
    if (!spec.weights.empty() && spec.weights.size() != spec.client_means.size()) {
      throw ConfigError("problem.weights", "one weight per client");
    }
  }

  /// theta* = 1/sqrt(sum mu_i E_i[Z])
  static double optimum(std::span<const double> means, std::span<const double> weights) {
    double m = 0.0;
    for (std::size_t i = 0; i < means.size(); ++i) m += weights[i] * means[i];
    return 1.0 / std::sqrt(m);
  }
  /// Fixed value of parameter-space averaging: sum mu_i / sqrt(E_i[Z]).
  static double theta_space_limit(std::span<const double> means, std::span<const double> weights) {
    double v = 0.0;
    for (std::size_t i = 0; i < means.size(); ++i) v += weights[i] / std::sqrt(means[i]);
    return v;
  }

  std::string name() const { return "remark1"; }
  Layout surrogate_layout() const { return Layout::flat(1); }
  std::pair<Eigen::Index, Eigen::Index> param_shape() const { return {1, 1}; }

  SurrogateVector make_surrogate(double s) const {
    return SurrogateVector(surrogate_layout(), Vector::Constant(1, s));
  }

  ModelParam t_map(const SurrogateVector& s) const {
    const double v = s.data()[0];
    if (!(v > 0.0)) throw DomainError("remark1 T map: s must be > 0");
    return ModelParam::Constant(1, 1, 1.0 / std::sqrt(v));
  }

  SurrogateVector oracle(const Dataset& data, std::span<const std::size_t> batch,
                         const ModelParam& /*theta*/, Rng& /*rng*/) const {
    if (batch.empty()) throw DomainError("remark1 oracle: empty batch");
    double acc = 0.0;
    for (std::size_t i : batch) acc += data.row(static_cast<Eigen::Index>(i))[0];
    return make_surrogate(acc / static_cast<double>(batch.size()));
  }

  SurrogateVector exact_sbar(const Dataset& data, const ModelParam& theta) const {
    Rng unused;
    const auto idx = all_rows(data);
    return oracle(data, idx, theta, unused);
  }

  double loss(const Dataset& data, const ModelParam& theta) const {
    const double th = theta(0, 0);
    return data.mean()[0] * th + 1.0 / th;
  }

  /// Indicator of theta > 0.
  double penalty(const ModelParam& theta) const {
    return theta(0, 0) > 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }

  double psi(const ModelParam& theta) const { return 1.0 / theta(0, 0); }
  Vector phi(const ModelParam& theta) const { return Vector::Constant(1, -theta(0, 0)); }

  bool supports_geometry(Geometry) const { return true; }

  /// Clip to [s_floor, inf); any positive weight gives the same 1-d projection.
  SurrogateVector project(const SurrogateVector& s, Geometry) const {
    return make_surrogate(std::max(s.data()[0], s_floor_));
  }

  bool in_surrogate_set(const SurrogateVector& s) const {
    return s.size() == 1 && std::isfinite(s.data()[0]) && s.data()[0] >= s_floor_;
  }

 private:
  double s_floor_ = 1e-12;
};

static_assert(HasSurrogateFunctions<Remark1Problem>);

}  // namespace fedmm::problems
