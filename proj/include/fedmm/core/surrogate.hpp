#pragma once

// Points of the surrogate space and of the parameter space.
//
// A SurrogateVector is the flattened concatenation of a problem's statistic
// blocks (column-major per block). The layout travels with the data so that
// block views and block-wise codecs do not need the problem at hand.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "fedmm/core/errors.hpp"

namespace fedmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Parameter-space point; the shape is problem specific (p x K dictionary,
/// p x L means, 1 x 1 scalar, d x 1 vector).
using ModelParam = Eigen::MatrixXd;

struct Block {
  Eigen::Index rows = 0;
  Eigen::Index cols = 1;
  bool symmetric = false;

  Eigen::Index size() const noexcept { return rows * cols; }
  friend bool operator==(const Block&, const Block&) = default;
};

class Layout {
 public:
  Layout() = default;
  Layout(std::initializer_list<Block> blocks) : blocks_(blocks) { recompute(); }
  explicit Layout(std::vector<Block> blocks) : blocks_(std::move(blocks)) { recompute(); }

  /// Single unstructured block of length n.
  static Layout flat(Eigen::Index n) { return Layout{Block{n, 1, false}}; }

  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::size_t block_count() const noexcept { return blocks_.size(); }
  Eigen::Index size() const noexcept { return total_; }
  Eigen::Index offset(std::size_t b) const { return offsets_.at(b); }

  friend bool operator==(const Layout& a, const Layout& b) { return a.blocks_ == b.blocks_; }

 private:
  void recompute() {
    offsets_.resize(blocks_.size());
    total_ = 0;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      offsets_[i] = total_;
      total_ += blocks_[i].size();
    }
  }

  std::vector<Block> blocks_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index total_ = 0;
};

class SurrogateVector {
 public:
  SurrogateVector() = default;
  explicit SurrogateVector(Layout layout)
      : layout_(std::move(layout)), data_(Vector::Zero(layout_.size())) {}
  SurrogateVector(Layout layout, Vector data) : layout_(std::move(layout)), data_(std::move(data)) {
    if (data_.size() != layout_.size()) {
      throw DomainError("surrogate data length " + std::to_string(data_.size()) +
                        " does not match layout size " + std::to_string(layout_.size()));
    }
  }

  static SurrogateVector zeros_like(const SurrogateVector& s) { return SurrogateVector(s.layout_); }

  const Layout& layout() const noexcept { return layout_; }
  const Vector& data() const noexcept { return data_; }
  Vector& data() noexcept { return data_; }
  Eigen::Index size() const noexcept { return data_.size(); }

  Eigen::Map<const Matrix> block(std::size_t b) const {
    const Block& blk = layout_.blocks().at(b);
    return {data_.data() + layout_.offset(b), blk.rows, blk.cols};
  }
  Eigen::Map<Matrix> block(std::size_t b) {
    const Block& blk = layout_.blocks().at(b);
    return {data_.data() + layout_.offset(b), blk.rows, blk.cols};
  }
  /// Flat segment of block b.
  auto segment(std::size_t b) const {
    return data_.segment(layout_.offset(b), layout_.blocks().at(b).size());
  }
  auto segment(std::size_t b) {
    return data_.segment(layout_.offset(b), layout_.blocks().at(b).size());
  }

  double norm() const { return data_.norm(); }
  double squared_norm() const { return data_.squaredNorm(); }
  bool all_finite() const { return data_.allFinite(); }

  SurrogateVector& operator+=(const SurrogateVector& o) {
    check_same(o);
    data_ += o.data_;
    return *this;
  }
  SurrogateVector& operator-=(const SurrogateVector& o) {
    check_same(o);
    data_ -= o.data_;
    return *this;
  }
  SurrogateVector& operator*=(double a) {
    data_ *= a;
    return *this;
  }
  friend SurrogateVector operator+(SurrogateVector a, const SurrogateVector& b) { return a += b; }
  friend SurrogateVector operator-(SurrogateVector a, const SurrogateVector& b) { return a -= b; }
  friend SurrogateVector operator*(double a, SurrogateVector s) { return s *= a; }
  friend SurrogateVector operator*(SurrogateVector s, double a) { return s *= a; }

  /// (1 - w) * a + w * b
  static SurrogateVector convex(const SurrogateVector& a, const SurrogateVector& b, double w) {
    a.check_same(b);
    return SurrogateVector(a.layout_, a.data_ + w * (b.data_ - a.data_));
  }

 private:
  void check_same(const SurrogateVector& o) const {
    if (!(layout_ == o.layout_)) throw DomainError("surrogate layouts differ");
  }

  Layout layout_;
  Vector data_;
};

}  // namespace fedmm
