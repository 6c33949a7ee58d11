#pragma once

// Client partitions and the balanced (capacity-constrained) k-means split.

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "fedmm/core/dataset.hpp"
#include "fedmm/core/errors.hpp"
#include "fedmm/core/rng.hpp"
#include "fedmm/federation/federated_data.hpp"

namespace fedmm::datasets {

struct ClientPartition {
  std::vector<std::uint32_t> assignment;  ///< row index -> client id
  std::size_t n = 0;

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s(n, 0);
    for (std::uint32_t c : assignment) ++s.at(c);
    return s;
  }

  /// mu_i = N_i / N
  std::vector<double> weights() const {
    std::vector<double> w;
    const auto total = static_cast<double>(assignment.size());
    for (std::size_t s : sizes()) w.push_back(static_cast<double>(s) / total);
    return w;
  }

  std::vector<std::vector<std::size_t>> members() const {
    std::vector<std::vector<std::size_t>> m(n);
    for (std::size_t r = 0; r < assignment.size(); ++r) m.at(assignment[r]).push_back(r);
    return m;
  }

  federation::FederatedData apply(const Dataset& data) const {
    if (assignment.size() != static_cast<std::size_t>(data.size())) {
      throw DomainError("partition covers " + std::to_string(assignment.size()) + " rows, dataset has " +
                        std::to_string(data.size()));
    }
    std::vector<Dataset> parts;
    const auto groups = members();
    for (std::size_t c = 0; c < n; ++c) {
      parts.push_back(data.subset(groups[c], data.provenance() + "#client" + std::to_string(c)));
    }
    return federation::FederatedData(std::move(parts), weights());
  }
};

/// Every client holds a copy of the full data; mu_i = 1/n.
inline federation::FederatedData homogeneous_split(const Dataset& data, std::size_t n) {
  if (n == 0) throw ConfigError("split.n", "must be >= 1");
  std::vector<Dataset> parts(n, data);
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  double rest = 1.0;
  for (std::size_t i = 0; i + 1 < n; ++i) rest -= w[i];
  w.back() = rest;
  return federation::FederatedData(std::move(parts), std::move(w));
}

namespace detail {

inline Eigen::MatrixXd kmeanspp_init(const Dataset& data, std::size_t n, Rng& rng) {
  const Eigen::Index big_n = data.size();
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(n), data.dim());
  centers.row(0) = data.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(big_n))));
  Eigen::VectorXd d2 = Eigen::VectorXd::Constant(big_n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < n; ++c) {
    for (Eigen::Index i = 0; i < big_n; ++i) {
      d2[i] = std::min(d2[i], (data.row(i) - centers.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
    }
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (pick = 0; pick + 1 < big_n; ++pick) {
        if (u < d2[pick]) break;
        u -= d2[pick];
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(big_n)));
    }
    centers.row(static_cast<Eigen::Index>(c)) = data.row(pick);
  }
  return centers;
}

/// Greedy assignment in ascending (distance, point, cluster) order. Cluster
/// capacity is ceil(N/n) until N mod n clusters reached it, floor(N/n) after,
/// so sizes differ by at most one.
inline std::vector<std::uint32_t> capacity_assign(const Dataset& data, const Eigen::MatrixXd& centers) {
  const auto big_n = static_cast<std::size_t>(data.size());
  const auto n = static_cast<std::size_t>(centers.rows());
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  pairs.reserve(big_n * n);
  for (std::size_t i = 0; i < big_n; ++i)
    for (std::size_t c = 0; c < n; ++c)
      pairs.emplace_back((data.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm(), i, c);
  std::sort(pairs.begin(), pairs.end());
  const std::size_t lo = big_n / n;
  const std::size_t extra = big_n % n;
  std::size_t at_ceiling = 0;
  std::vector<std::size_t> size(n, 0);
  std::vector<std::uint32_t> out(big_n, std::numeric_limits<std::uint32_t>::max());
  std::size_t placed = 0;
  for (const auto& [d, i, c] : pairs) {
    if (placed == big_n) break;
    if (out[i] != std::numeric_limits<std::uint32_t>::max()) continue;
    const std::size_t cap = at_ceiling < extra ? lo + 1 : lo;
    if (size[c] >= cap) continue;
    out[i] = static_cast<std::uint32_t>(c);
    ++size[c];
    ++placed;
    if (extra > 0 && size[c] == lo + 1) ++at_ceiling;
  }
  return out;
}

}  // namespace detail

/// Balanced Lloyd iterations: k-means++ seeding, capacity-constrained greedy
/// assignment, centroid update; stops when the assignment is stable.
inline ClientPartition balanced_kmeans_split(const Dataset& data, std::size_t n, Rng& rng, std::size_t iters = 50) {
  if (n == 0) throw ConfigError("split.n", "must be >= 1");
  if (static_cast<std::size_t>(data.size()) < n) throw ConfigError("split.n", "more clients than data rows");
  ClientPartition part;
  part.n = n;
  if (n == 1) {
    part.assignment.assign(static_cast<std::size_t>(data.size()), 0);
    return part;
  }
  Eigen::MatrixXd centers = detail::kmeanspp_init(data, n, rng);
  part.assignment = detail::capacity_assign(data, centers);
  for (std::size_t it = 0; it < iters; ++it) {
    centers.setZero();
    std::vector<double> count(n, 0.0);
    for (std::size_t i = 0; i < part.assignment.size(); ++i) {
      centers.row(part.assignment[i]) += data.row(static_cast<Eigen::Index>(i));
      count[part.assignment[i]] += 1.0;
    }
    for (std::size_t c = 0; c < n; ++c) centers.row(static_cast<Eigen::Index>(c)) /= count[c];
    auto next = detail::capacity_assign(data, centers);
    if (next == part.assignment) break;
    part.assignment = std::move(next);
  }
  return part;
}

/// Explicit labels become client ids.
inline ClientPartition label_split(const std::vector<std::uint32_t>& labels) {
  ClientPartition part;
  part.assignment = labels;
  for (std::uint32_t l : labels) part.n = std::max<std::size_t>(part.n, l + 1);
  return part;
}

inline void write_partition_csv(std::ostream& out, const ClientPartition& part) {
  out << "row_index,client_id\n";
  for (std::size_t r = 0; r < part.assignment.size(); ++r) out << r << ',' << part.assignment[r] << '\n';
}

inline void save_partition_csv(const std::string& path, const ClientPartition& part) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write_partition_csv(out, part);
}

}  // namespace fedmm::datasets
