#pragma once

// MAP estimation of a Poisson log-intensity with a latent additive effect,
// in the parameterization where E_pi[Z] is known:
//   f(theta) = E_pi[ -log sum_k w_k exp(theta z - e^theta e^{h_k}) ],  g = lambda e^theta,
//   psi(theta) = -theta E_pi[Z],  phi(theta) = e^theta,  S(z, h) = -e^h,
//   T(s) = ln(E_pi[Z] / (lambda - s)),  S = [-M, 0].
// The latent distribution is a finite mixture of atoms h_k with weights w_k.

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

struct PoissonEMSpec {
  double lambda = 1.0;
  double mean_z = 1.0;                 ///< E_pi[Z] over the pooled data
  std::vector<double> latent_atoms{0.0};
  std::vector<double> latent_weights{1.0};
  double bound_m = 1e3;                ///< S = [-M, 0]
  std::size_t inner_samples = 0;       ///< 0: exact posterior expectation
};

class PoissonEM {
 public:
  explicit PoissonEM(PoissonEMSpec spec) : spec_(std::move(spec)) {
    if (!(spec_.lambda > 0.0)) throw ConfigError("problem.lambda", "must be > 0");
    if (!(spec_.mean_z > 0.0)) throw ConfigError("problem.mean_z", "mean count must be > 0");
    if (!(spec_.bound_m > 0.0)) throw ConfigError("problem.M", "must be > 0");
    if (spec_.latent_atoms.empty() || spec_.latent_atoms.size() != spec_.latent_weights.size()) {
      throw ConfigError("problem.latent", "atoms and weights must be nonempty and of equal length");
    }
    double total = 0.0;
    for (std::size_t k = 0; k < spec_.latent_atoms.size(); ++k) {
      if (!(spec_.latent_weights[k] > 0.0)) throw ConfigError("problem.latent.weights", "must be > 0");
      total += spec_.latent_weights[k];
      if (std::exp(spec_.latent_atoms[k]) > spec_.bound_m) {
        throw ConfigError("problem.M", "exp(latent atom) exceeds M; S̄ would leave [-M, 0]");
      }
    }
    for (double& w : spec_.latent_weights) w /= total;
  }

  /// Data must be nonnegative integer counts.
  static void validate_counts(const Dataset& data) {
    if (data.dim() != 1) throw DomainError("poisson data must have one column");
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      const double z = data.row(i)[0];
      if (z < 0.0 || z != std::floor(z)) {
        throw DomainError("poisson data row " + std::to_string(i) + " is not a nonnegative integer");
      }
    }
  }

  const PoissonEMSpec& spec() const noexcept { return spec_; }
  std::string name() const { return "poisson"; }
  Layout surrogate_layout() const { return Layout::flat(1); }
  std::pair<Eigen::Index, Eigen::Index> param_shape() const { return {1, 1}; }

  SurrogateVector make_surrogate(double s) const {
    return SurrogateVector(surrogate_layout(), Vector::Constant(1, s));
  }

  /// ln(E_pi[Z] / (lambda - s))
  ModelParam t_map(const SurrogateVector& s) const {
    const double v = s.data()[0];
    if (!(spec_.lambda - v > 0.0)) throw DomainError("poisson T map: requires lambda - s > 0");
    return ModelParam::Constant(1, 1, std::log(spec_.mean_z / (spec_.lambda - v)));
  }

  /// Posterior weights of the latent atoms at theta.
  std::vector<double> posterior(double theta) const {
    const std::size_t n = spec_.latent_atoms.size();
    std::vector<double> logw(n);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      logw[k] = std::log(spec_.latent_weights[k]) - std::exp(theta + spec_.latent_atoms[k]);
      mx = std::max(mx, logw[k]);
    }
    double total = 0.0;
    for (double& l : logw) {
      l = std::exp(l - mx);
      total += l;
    }
    for (double& l : logw) l /= total;
    return logw;
  }

  /// -E[e^h] under the posterior at theta.
  double sbar_exact(double theta) const {
    const auto w = posterior(theta);
    double acc = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * std::exp(spec_.latent_atoms[k]);
    return -acc;
  }

  SurrogateVector oracle(const Dataset& /*data*/, std::span<const std::size_t> batch,
                         const ModelParam& theta, Rng& rng) const {
    if (batch.empty()) throw DomainError("poisson oracle: empty batch");
    const double th = theta(0, 0);
    if (spec_.inner_samples == 0) return make_surrogate(sbar_exact(th));
    // Monte Carlo over the posterior, inner_samples draws per datum.
    const auto w = posterior(th);
    double acc = 0.0;
    const std::size_t draws = batch.size() * spec_.inner_samples;
    for (std::size_t d = 0; d < draws; ++d) {
      double u = rng.uniform();
      std::size_t k = 0;
      while (k + 1 < w.size() && u >= w[k]) {
        u -= w[k];
        ++k;
      }
      acc -= std::exp(spec_.latent_atoms[k]);
    }
    return make_surrogate(acc / static_cast<double>(draws));
  }

  SurrogateVector exact_sbar(const Dataset& /*data*/, const ModelParam& theta) const {
    return make_surrogate(sbar_exact(theta(0, 0)));
  }

  double loss(const Dataset& data, const ModelParam& theta) const {
    const double th = theta(0, 0);
    const double mean = data.empty() ? 0.0 : data.mean()[0];
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> logw(spec_.latent_atoms.size());
    for (std::size_t k = 0; k < logw.size(); ++k) {
      logw[k] = std::log(spec_.latent_weights[k]) - std::exp(th + spec_.latent_atoms[k]);
      mx = std::max(mx, logw[k]);
    }
    double total = 0.0;
    for (double l : logw) total += std::exp(l - mx);
    return -th * mean - (mx + std::log(total));
  }

  double penalty(const ModelParam& theta) const { return spec_.lambda * std::exp(theta(0, 0)); }

  double psi(const ModelParam& theta) const { return -theta(0, 0) * spec_.mean_z; }
  Vector phi(const ModelParam& theta) const { return Vector::Constant(1, std::exp(theta(0, 0))); }

  /// B(s) = E_pi[Z] / (lambda - s)^2
  double geometry_weight(const SurrogateVector& s) const {
    const double d = spec_.lambda - s.data()[0];
    return spec_.mean_z / (d * d);
  }

  bool supports_geometry(Geometry) const { return true; }

  /// Clip to [-M, 0]. In one dimension every positive weight B yields the
  /// same minimizer, so both geometries agree.
  SurrogateVector project(const SurrogateVector& s, Geometry) const {
    return make_surrogate(std::clamp(s.data()[0], -spec_.bound_m, 0.0));
  }

  bool in_surrogate_set(const SurrogateVector& s) const {
    const double v = s.data()[0];
    return s.size() == 1 && std::isfinite(v) && v >= -spec_.bound_m && v <= 0.0;
  }

 private:
  PoissonEMSpec spec_;
};

static_assert(HasSurrogateFunctions<PoissonEM>);

}  // namespace fedmm::problems
