#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <vector>

#include "fedmm/core/errors.hpp"

namespace fedmm::problems {

/// Frobenius-nearest PSD matrix: symmetrize, eigendecompose, clip negative
/// eigenvalues. Inputs that are already symmetric PSD are returned unchanged.
inline Eigen::MatrixXd psd_project(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw DomainError("psd_project needs a square block");
  if (a.size() == 0) return a;
  const bool symmetric = a == a.transpose();
  if (symmetric) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) return a;
  }
  const Eigen::MatrixXd sym = symmetric ? a : Eigen::MatrixXd(0.5 * (a + a.transpose()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw Error("eigendecomposition failed in PSD projection");
  if (eig.eigenvalues().minCoeff() >= 0.0) return sym;
  const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
}

inline double min_symmetric_eigenvalue(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

/// Euclidean projection onto { x >= 0, sum(x) <= 1 }.
inline Eigen::VectorXd project_capped_simplex(const Eigen::VectorXd& v) {
  Eigen::VectorXd x = v.cwiseMax(0.0);
  if (x.sum() <= 1.0) return x;
  // Project onto the face sum(x) = 1 (sort-based threshold).
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double cand = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - cand > 0.0) tau = cand;
  }
  return (v.array() - tau).cwiseMax(0.0).matrix();
}

}  // namespace fedmm::problems
