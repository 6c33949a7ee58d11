#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "fedmm/core/errors.hpp"

namespace fedmm {

/// Step sizes gamma_k for k = 1, 2, ... (round t uses gamma_{t+1}).
class StepSchedule {
 public:
  enum class Kind { constant, sqrt_decay, harmonic };

  static StepSchedule constant(double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("schedule.gamma", "must lie in (0, 1]");
    return StepSchedule(Kind::constant, gamma);
  }
  /// gamma_k = beta / sqrt(beta + k)
  static StepSchedule sqrt_decay(double beta) {
    if (!(beta > 0.0)) throw ConfigError("schedule.beta", "must be positive");
    // gamma_1 is the largest value; it must not exceed 1.
    if (beta / std::sqrt(beta + 1.0) > 1.0) {
      throw ConfigError("schedule.beta", "beta/sqrt(beta+1) exceeds 1");
    }
    return StepSchedule(Kind::sqrt_decay, beta);
  }
  /// gamma_k = 1 / k; the iterate is the running mean of the oracles.
  static StepSchedule harmonic() { return StepSchedule(Kind::harmonic, 1.0); }

  Kind kind() const noexcept { return kind_; }
  double parameter() const noexcept { return value_; }

  double at(std::size_t k) const {
    if (k == 0) throw DomainError("step schedule is indexed from 1");
    const auto kd = static_cast<double>(k);
    switch (kind_) {
      case Kind::constant:
        return value_;
      case Kind::sqrt_decay:
        return value_ / std::sqrt(value_ + kd);
      case Kind::harmonic:
        return 1.0 / kd;
    }
    return value_;
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::constant:
        return "constant(" + std::to_string(value_) + ")";
      case Kind::sqrt_decay:
        return "sqrt(" + std::to_string(value_) + ")";
      case Kind::harmonic:
        return "harmonic";
    }
    return "?";
  }

 private:
  StepSchedule(Kind k, double v) : kind_(k), value_(v) {}
  Kind kind_;
  double value_;
};

}  // namespace fedmm
