#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedmm/core/errors.hpp"

namespace fedmm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense collection of observations, one row per datum.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(RowMatrix rows, std::string provenance = {})
      : rows_(std::move(rows)), provenance_(std::move(provenance)) {
    if (!rows_.allFinite()) throw DomainError("dataset contains non-finite entries");
  }

  Eigen::Index size() const noexcept { return rows_.rows(); }
  Eigen::Index dim() const noexcept { return rows_.cols(); }
  bool empty() const noexcept { return rows_.rows() == 0; }

  auto row(Eigen::Index i) const { return rows_.row(i); }
  const RowMatrix& rows() const noexcept { return rows_; }
  const std::string& provenance() const noexcept { return provenance_; }

  Eigen::VectorXd mean() const {
    if (empty()) return Eigen::VectorXd::Zero(dim());
    return rows_.colwise().mean().transpose();
  }

  /// Rows selected by index, in the given order.
  Dataset subset(std::span<const std::size_t> idx, std::string provenance = {}) const {
    RowMatrix out(static_cast<Eigen::Index>(idx.size()), dim());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = rows_.row(static_cast<Eigen::Index>(idx[r]));
    return Dataset(std::move(out), provenance.empty() ? provenance_ : std::move(provenance));
  }

 private:
  RowMatrix rows_;
  std::string provenance_;
};

/// Indices 0..n-1.
inline std::vector<std::size_t> all_rows(const Dataset& d) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(d.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

}  // namespace fedmm
