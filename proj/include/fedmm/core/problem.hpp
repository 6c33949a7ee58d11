#pragma once

// Linearly parameterized majorize-minimization problems.
//
// A problem supplies a family of surrogates g + psi - <s, phi> indexed by a
// point s of a convex set S, the minimizer map T : S -> Theta, and the
// statistic S̄(z, tau) whose expectation picks the surrogate tangent at tau.
// Everything below is written against the MMProblem concept; the concrete
// instances live in fedmm/problems.

#include <Eigen/Dense>

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedmm/core/dataset.hpp"
#include "fedmm/core/errors.hpp"
#include "fedmm/core/rng.hpp"
#include "fedmm/core/surrogate.hpp"

namespace fedmm {

/// Quadratic norm used by the server projection.
enum class Geometry { identity, problem };

template <class P>
concept MMProblem = requires(const P& p, const Dataset& data, std::span<const std::size_t> batch,
                             const ModelParam& theta, const SurrogateVector& s, Rng& rng,
                             Geometry geom) {
  { p.name() } -> std::convertible_to<std::string>;
  { p.surrogate_layout() } -> std::convertible_to<Layout>;
  { p.param_shape() } -> std::convertible_to<std::pair<Eigen::Index, Eigen::Index>>;
  { p.t_map(s) } -> std::convertible_to<ModelParam>;
  { p.oracle(data, batch, theta, rng) } -> std::convertible_to<SurrogateVector>;
  { p.exact_sbar(data, theta) } -> std::convertible_to<SurrogateVector>;
  { p.loss(data, theta) } -> std::convertible_to<double>;
  { p.penalty(theta) } -> std::convertible_to<double>;
  { p.project(s, geom) } -> std::convertible_to<SurrogateVector>;
  { p.in_surrogate_set(s) } -> std::convertible_to<bool>;
  { p.supports_geometry(geom) } -> std::convertible_to<bool>;
};

/// Instances exposing psi and phi, needed for the majorization check.
template <class P>
concept HasSurrogateFunctions = MMProblem<P> && requires(const P& p, const ModelParam& theta) {
  { p.psi(theta) } -> std::convertible_to<double>;
  { p.phi(theta) } -> std::convertible_to<Vector>;
};

/// (f + g)(theta) with f the empirical mean over `data`.
template <MMProblem P>
double objective(const P& problem, const Dataset& data, const ModelParam& theta) {
  return problem.loss(data, theta) + problem.penalty(theta);
}

/// h(s) = E_pi[S̄(Z, T(s))] - s
template <MMProblem P>
SurrogateVector mean_field(const P& problem, const Dataset& data, const SurrogateVector& s) {
  return problem.exact_sbar(data, problem.t_map(s)) - s;
}

/// theta_{t+1} = T(E_pi[S̄(Z, theta_t)])
template <MMProblem P>
ModelParam mm_step_theta(const P& problem, const Dataset& data, const ModelParam& theta) {
  return problem.t_map(problem.exact_sbar(data, theta));
}

/// s_{t+1} = E_pi[S̄(Z, T(s_t))]
template <MMProblem P>
SurrogateVector mm_step_s(const P& problem, const Dataset& data, const SurrogateVector& s) {
  return problem.exact_sbar(data, problem.t_map(s));
}

struct FixedPointResidual {
  double surrogate = 0.0;  ///< ||h(s)||
  double parameter = 0.0;  ///< ||T(E_pi[S̄(Z, T(s))]) - T(s)||_F
};

template <MMProblem P>
FixedPointResidual fixed_point_residual(const P& problem, const Dataset& data,
                                        const SurrogateVector& s) {
  const ModelParam theta = problem.t_map(s);
  const SurrogateVector next = problem.exact_sbar(data, theta);
  const ModelParam theta_next = problem.t_map(next);
  return {(next - s).norm(), (theta_next - theta).norm()};
}

struct MajorizationReport {
  bool holds = true;
  double max_violation = 0.0;  ///< max over probes of f(theta) - bound(theta), clipped at 0
  double tangency_gap = 0.0;   ///< |f(tau) - bound(tau)|
};

/// Checks f(theta) <= f(tau) + psi(theta) - psi(tau) - <E S̄(tau), phi(theta) - phi(tau)>
/// on every probe, and equality at theta = tau.
template <HasSurrogateFunctions P>
MajorizationReport check_majorization(const P& problem, const Dataset& data, const ModelParam& tau,
                                      std::span<const ModelParam> probes, double tol = 1e-9) {
  const double f_tau = problem.loss(data, tau);
  const double psi_tau = problem.psi(tau);
  const Vector phi_tau = problem.phi(tau);
  const Vector sbar = problem.exact_sbar(data, tau).data();
  auto bound = [&](const ModelParam& theta) {
    return f_tau + problem.psi(theta) - psi_tau - sbar.dot(problem.phi(theta) - phi_tau);
  };
  MajorizationReport rep;
  rep.tangency_gap = std::abs(f_tau - bound(tau));
  if (rep.tangency_gap > tol) rep.holds = false;
  for (const ModelParam& theta : probes) {
    const double excess = problem.loss(data, theta) - bound(theta);
    rep.max_violation = std::max(rep.max_violation, excess);
    if (excess > tol) rep.holds = false;
  }
  return rep;
}

/// Minibatch indices for one oracle call: the whole slice when batch_size is
/// 0 or covers it, otherwise a uniform draw without replacement.
inline std::vector<std::size_t> draw_minibatch(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0 || batch_size >= n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  auto idx = rng.sample_without_replacement(n, batch_size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Oracle draw for (seed, client, round). The federated simulator and the
/// centralized loop share this so that their oracle streams coincide.
template <MMProblem P>
SurrogateVector sample_oracle(const P& problem, const Dataset& data, std::size_t batch_size,
                              const ModelParam& theta, std::uint64_t seed, std::uint64_t client,
                              std::uint64_t round) {
  Rng batch_rng = Rng::stream(seed, {client, round, static_cast<std::uint64_t>(StreamPurpose::minibatch)});
  Rng inner_rng = Rng::stream(seed, {client, round, static_cast<std::uint64_t>(StreamPurpose::inner_oracle)});
  const auto idx = draw_minibatch(static_cast<std::size_t>(data.size()), batch_size, batch_rng);
  return problem.oracle(data, idx, theta, inner_rng);
}

}  // namespace fedmm
