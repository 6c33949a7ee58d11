#pragma once

// Seeded synthetic data. All draws come from the SplitMix64 counter stream in
// fedmm/core/rng.hpp, so a seed yields the same bytes on every platform.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fedmm/core/dataset.hpp"
#include "fedmm/core/errors.hpp"
#include "fedmm/core/rng.hpp"

namespace fedmm::datasets {

struct DictData {
  Eigen::MatrixXd theta_star;  ///< p x K
  Eigen::MatrixXd codes;       ///< K x tot
  Dataset data;                ///< rows z_t = theta* h_t
};

inline std::size_t dict_nonzeros(std::size_t k, double sparsity) {
  return static_cast<std::size_t>(std::llround(sparsity * static_cast<double>(k)));
}

/// theta*_{ij} ~ N(0,1) (column-major order), then for each datum
/// round(sparsity K) code positions drawn uniformly without replacement with
/// N(0,1) values.
inline DictData gen_synthetic_dict(std::size_t p, std::size_t k, std::size_t tot, double sparsity, Rng& rng) {
  if (p == 0 || k == 0) throw ConfigError("dataset.p", "dimensions must be positive");
  if (!(sparsity > 0.0 && sparsity <= 1.0)) throw ConfigError("dataset.sparsity", "must lie in (0, 1]");
  const auto pi = static_cast<Eigen::Index>(p);
  const auto ki = static_cast<Eigen::Index>(k);
  DictData out;
  out.theta_star.resize(pi, ki);
  for (Eigen::Index j = 0; j < ki; ++j)
    for (Eigen::Index i = 0; i < pi; ++i) out.theta_star(i, j) = rng.normal();
  const std::size_t nnz = dict_nonzeros(k, sparsity);
  out.codes = Eigen::MatrixXd::Zero(ki, static_cast<Eigen::Index>(tot));
  RowMatrix rows(static_cast<Eigen::Index>(tot), pi);
  for (std::size_t t = 0; t < tot; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    for (std::size_t pos : rng.sample_without_replacement(k, nnz)) {
      out.codes(static_cast<Eigen::Index>(pos), ti) = rng.normal();
    }
    rows.row(ti) = (out.theta_star * out.codes.col(ti)).transpose();
  }
  out.data = Dataset(std::move(rows), "synthetic-dict");
  return out;
}

struct GmmData {
  std::vector<Eigen::VectorXd> means;
  std::vector<std::size_t> labels;
  Dataset data;
};

/// Labels ~ Categorical(weights), z = m_label + sigma * N(0, I); component
/// means ~ separation * N(0, I).
inline GmmData gen_gmm(std::size_t p, const std::vector<double>& weights, double separation, double sigma,
                       std::size_t tot, Rng& rng) {
  if (p == 0 || weights.size() < 2) throw ConfigError("dataset", "need p >= 1 and at least two components");
  const auto pi = static_cast<Eigen::Index>(p);
  GmmData out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Eigen::VectorXd m(pi);
    for (Eigen::Index i = 0; i < pi; ++i) m[i] = separation * rng.normal();
    out.means.push_back(std::move(m));
  }
  double total = 0.0;
  for (double w : weights) total += w;
  RowMatrix rows(static_cast<Eigen::Index>(tot), pi);
  for (std::size_t t = 0; t < tot; ++t) {
    double u = rng.uniform() * total;
    std::size_t l = 0;
    while (l + 1 < weights.size() && u >= weights[l]) u -= weights[l++];
    out.labels.push_back(l);
    for (Eigen::Index i = 0; i < pi; ++i) rows(static_cast<Eigen::Index>(t), i) = out.means[l][i] + sigma * rng.normal();
  }
  out.data = Dataset(std::move(rows), "synthetic-gmm");
  return out;
}

/// Counts z ~ Poisson(exp(theta + h)) with h drawn from the discrete latent law.
inline Dataset gen_poisson(double theta, const std::vector<double>& atoms, const std::vector<double>& weights,
                           std::size_t tot, Rng& rng) {
  if (atoms.empty() || atoms.size() != weights.size()) throw ConfigError("dataset.latent", "atoms/weights mismatch");
  double total = 0.0;
  for (double w : weights) total += w;
  RowMatrix rows(static_cast<Eigen::Index>(tot), 1);
  for (std::size_t t = 0; t < tot; ++t) {
    double u = rng.uniform() * total;
    std::size_t l = 0;
    while (l + 1 < atoms.size() && u >= weights[l]) u -= weights[l++];
    rows(static_cast<Eigen::Index>(t), 0) = static_cast<double>(rng.poisson(std::exp(theta + atoms[l])));
  }
  return Dataset(std::move(rows), "synthetic-poisson");
}

/// Rows (a, b) with a ~ N(0, I_d), b = a'w + noise * N(0,1), w ~ N(0, I_d).
inline Dataset gen_linear(std::size_t d, std::size_t tot, double noise, Rng& rng) {
  if (d == 0) throw ConfigError("dataset.d", "must be positive");
  const auto di = static_cast<Eigen::Index>(d);
  Eigen::VectorXd w(di);
  for (Eigen::Index i = 0; i < di; ++i) w[i] = rng.normal();
  RowMatrix rows(static_cast<Eigen::Index>(tot), di + 1);
  for (std::size_t t = 0; t < tot; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    for (Eigen::Index i = 0; i < di; ++i) rows(ti, i) = rng.normal();
    rows(ti, di) = rows.row(ti).head(di).dot(w.transpose()) + noise * rng.normal();
  }
  return Dataset(std::move(rows), "synthetic-linear");
}

/// One single-row dataset per client holding E_{pi_i}[Z].
inline std::vector<Dataset> gen_remark1(const std::vector<double>& client_means) {
  std::vector<Dataset> out;
  for (double m : client_means) {
    RowMatrix r(1, 1);
    r(0, 0) = m;
    out.emplace_back(std::move(r), "remark1");
  }
  return out;
}

}  // namespace fedmm::datasets
