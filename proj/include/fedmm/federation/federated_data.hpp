#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "fedmm/core/dataset.hpp"
#include "fedmm/core/errors.hpp"
#include "fedmm/core/problem.hpp"

namespace fedmm::federation {

/// Client data slices with weights mu_i, sum mu_i = 1.
struct FederatedData {
  std::vector<Dataset> clients;
  std::vector<double> weights;

  FederatedData() = default;
  FederatedData(std::vector<Dataset> c, std::vector<double> w) : clients(std::move(c)), weights(std::move(w)) {
    validate();
  }

  /// mu_i = N_i / N
  static FederatedData proportional(std::vector<Dataset> c) {
    double total = 0.0;
    for (const Dataset& d : c) total += static_cast<double>(d.size());
    std::vector<double> w;
    for (const Dataset& d : c) w.push_back(static_cast<double>(d.size()) / total);
    return FederatedData(std::move(c), std::move(w));
  }

  std::size_t size() const noexcept { return clients.size(); }

  void validate() const {
    if (clients.empty()) throw ConfigError("split.n", "need at least one client");
    if (weights.size() != clients.size()) throw ConfigError("split", "one weight per client");
    double total = 0.0;
    for (std::size_t i = 0; i < clients.size(); ++i) {
      if (clients[i].empty()) throw ConfigError("split", "client " + std::to_string(i) + " holds no data");
      if (!(weights[i] >= 0.0)) throw ConfigError("split", "weights must be nonnegative");
      total += weights[i];
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("split", "client weights must sum to 1");
  }
};

/// sum_i mu_i f_i(theta) + g(theta)
template <MMProblem P>
double fleet_objective(const P& problem, const FederatedData& fd, const ModelParam& theta) {
  double f = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) f += fd.weights[i] * problem.loss(fd.clients[i], theta);
  return f + problem.penalty(theta);
}

/// calT(theta) = sum_i mu_i E_{pi_i}[S̄(Z, theta)]
template <MMProblem P>
SurrogateVector fleet_sbar(const P& problem, const FederatedData& fd, const ModelParam& theta) {
  SurrogateVector acc(problem.surrogate_layout());
  for (std::size_t i = 0; i < fd.size(); ++i) acc += fd.weights[i] * problem.exact_sbar(fd.clients[i], theta);
  return acc;
}

/// h(s) = calT(T(s)) - s
template <MMProblem P>
SurrogateVector fleet_mean_field(const P& problem, const FederatedData& fd, const SurrogateVector& s) {
  return fleet_sbar(problem, fd, problem.t_map(s)) - s;
}

/// h_i(s) = E_{pi_i}[S̄(Z, T(s))] - s
template <MMProblem P>
SurrogateVector local_mean_field(const P& problem, const Dataset& data, const SurrogateVector& s) {
  return mean_field(problem, data, s);
}

}  // namespace fedmm::federation
