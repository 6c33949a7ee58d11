#pragma once

// Unbiased randomized compression of surrogate-space vectors.
//
// Three codecs, each with a declared relative-variance bound omega such that
// E[Q(s)] = s and E||Q(s) - s||^2 <= omega ||s||^2:
//   identity       omega = 0
//   rand-k         keep k uniformly chosen coordinates scaled by q/k;
//                  omega = q/k - 1 (attained exactly)
//   quantization   per block, stochastic rounding to 2^b uniform levels on
//                  [-maxabs, maxabs]; per coordinate the error variance is at
//                  most Delta^2/4 = maxabs^2/(2^b-1)^2 and ||block||^2 >= maxabs^2,
//                  so omega = max_block_size / (2^b-1)^2.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedmm/core/errors.hpp"
#include "fedmm/core/rng.hpp"
#include "fedmm/core/surrogate.hpp"

namespace fedmm::federation {

enum class CodecTag : std::uint8_t { identity = 0, rand_k = 1, quantization = 2 };

/// Compressed representation, exactly what goes on the wire after the header.
struct EncodedPayload {
  CodecTag tag = CodecTag::identity;
  std::vector<double> values;          ///< identity: all q values; rand-k: kept raw values
  std::vector<std::uint32_t> indices;  ///< rand-k: kept coordinates (ascending)
  std::vector<double> block_scale;     ///< quantization: maxabs per block
  std::vector<std::uint32_t> codes;    ///< quantization: one level index per coordinate
};

class CompressionOperator {
 public:
  static CompressionOperator identity() { return CompressionOperator(CodecTag::identity, 0); }
  static CompressionOperator rand_k(std::size_t k) {
    if (k == 0) throw ConfigError("compression.k", "must be >= 1");
    return CompressionOperator(CodecTag::rand_k, k);
  }
  static CompressionOperator quantization(unsigned bits) {
    if (bits < 1 || bits > 32) throw ConfigError("compression.bits", "must lie in [1, 32]");
    return CompressionOperator(CodecTag::quantization, bits);
  }

  CodecTag tag() const noexcept { return tag_; }
  std::size_t k() const noexcept { return param_; }
  unsigned bits() const noexcept { return static_cast<unsigned>(param_); }

  /// Number of levels minus one, 2^b - 1.
  double level_span() const noexcept { return std::ldexp(1.0, static_cast<int>(bits())) - 1.0; }

  /// Declared omega for vectors with the given layout.
  double omega(const Layout& layout) const {
    switch (tag_) {
      case CodecTag::identity:
        return 0.0;
      case CodecTag::rand_k: {
        const auto q = static_cast<double>(layout.size());
        return param_ >= static_cast<std::size_t>(layout.size()) ? 0.0 : q / static_cast<double>(param_) - 1.0;
      }
      case CodecTag::quantization: {
        Eigen::Index largest = 0;
        for (const Block& b : layout.blocks()) largest = std::max(largest, b.size());
        const double span = level_span();
        return static_cast<double>(largest) / (span * span);
      }
    }
    return 0.0;
  }

  /// Serialized body size in bits (header excluded); byte aligned.
  std::size_t body_bits(const Layout& layout) const {
    const auto q = static_cast<std::size_t>(layout.size());
    switch (tag_) {
      case CodecTag::identity:
        return 64 * q;
      case CodecTag::rand_k: {
        const std::size_t kept = std::min(param_, q);
        return 32 + kept * (32 + 64);
      }
      case CodecTag::quantization: {
        std::size_t bits_total = 0;
        for (const Block& b : layout.blocks()) {
          const std::size_t code_bits = static_cast<std::size_t>(b.size()) * param_;
          bits_total += 64 + 8 * ((code_bits + 7) / 8);
        }
        return bits_total;
      }
    }
    return 0;
  }

  std::string describe() const {
    switch (tag_) {
      case CodecTag::identity:
        return "identity";
      case CodecTag::rand_k:
        return "randk" + std::to_string(param_);
      case CodecTag::quantization:
        return "quant" + std::to_string(param_);
    }
    return "?";
  }

  EncodedPayload encode(const SurrogateVector& s, Rng& rng) const {
    EncodedPayload out;
    out.tag = tag_;
    const Vector& x = s.data();
    const auto q = static_cast<std::size_t>(x.size());
    switch (tag_) {
      case CodecTag::identity:
        out.values.assign(x.data(), x.data() + x.size());
        break;
      case CodecTag::rand_k: {
        const std::size_t kept = std::min(param_, q);
        auto idx = rng.sample_without_replacement(q, kept);
        std::sort(idx.begin(), idx.end());
        for (std::size_t i : idx) {
          out.indices.push_back(static_cast<std::uint32_t>(i));
          out.values.push_back(x[static_cast<Eigen::Index>(i)]);
        }
        break;
      }
      case CodecTag::quantization: {
        const double span = level_span();
        const auto top = static_cast<std::uint64_t>(span);
        out.codes.reserve(q);
        for (std::size_t b = 0; b < s.layout().block_count(); ++b) {
          const auto seg = s.segment(b);
          const double m = seg.size() == 0 ? 0.0 : seg.cwiseAbs().maxCoeff();
          out.block_scale.push_back(m);
          for (Eigen::Index j = 0; j < seg.size(); ++j) {
            std::uint64_t level = 0;
            if (m > 0.0) {
              const double pos = (seg[j] + m) / (2.0 * m) * span;
              double lo = std::floor(pos);
              if (lo < 0.0) lo = 0.0;
              if (lo > span) lo = span;
              level = static_cast<std::uint64_t>(lo);
              const double frac = pos - lo;
              // Stochastic rounding; one uniform per coordinate keeps the
              // stream aligned regardless of the data.
              const double u = rng.uniform();
              if (u < frac && level < top) ++level;
            } else {
              (void)rng.uniform();
            }
            out.codes.push_back(static_cast<std::uint32_t>(level));
          }
        }
        break;
      }
    }
    return out;
  }

  SurrogateVector decode(const EncodedPayload& e, const Layout& layout) const {
    if (e.tag != tag_) throw DomainError("payload codec does not match the operator");
    SurrogateVector out(layout);
    Vector& x = out.data();
    const auto q = static_cast<double>(layout.size());
    switch (tag_) {
      case CodecTag::identity:
        if (static_cast<Eigen::Index>(e.values.size()) != layout.size()) throw DomainError("identity payload length");
        for (std::size_t i = 0; i < e.values.size(); ++i) x[static_cast<Eigen::Index>(i)] = e.values[i];
        break;
      case CodecTag::rand_k: {
        const double scale = q / static_cast<double>(e.indices.size());
        for (std::size_t i = 0; i < e.indices.size(); ++i) {
          x[static_cast<Eigen::Index>(e.indices[i])] = e.values[i] * scale;
        }
        break;
      }
      case CodecTag::quantization: {
        const double span = level_span();
        std::size_t c = 0;
        for (std::size_t b = 0; b < layout.block_count(); ++b) {
          auto seg = out.segment(b);
          const double m = e.block_scale.at(b);
          for (Eigen::Index j = 0; j < seg.size(); ++j, ++c) {
            seg[j] = m > 0.0 ? -m + 2.0 * m * (static_cast<double>(e.codes.at(c)) / span) : 0.0;
          }
        }
        break;
      }
    }
    return out;
  }

 private:
  CompressionOperator(CodecTag t, std::size_t p) : tag_(t), param_(p) {}
  CodecTag tag_;
  std::size_t param_;
};

struct Compressed {
  SurrogateVector value;  ///< receiver-side reconstruction
  EncodedPayload payload;
  std::size_t bits = 0;   ///< body bits
};

inline Compressed compress(const CompressionOperator& op, const SurrogateVector& s, Rng& rng) {
  EncodedPayload enc = op.encode(s, rng);
  SurrogateVector value = op.decode(enc, s.layout());
  return {std::move(value), std::move(enc), op.body_bits(s.layout())};
}

/// omega_p = omega + (1 - p)(omega + 1)/p: relative variance of (U/p) Quant(s)
/// with U ~ Bernoulli(p) independent of Quant.
inline double omega_p(double omega, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("participation probability must lie in (0, 1]");
  if (!(omega >= 0.0)) throw DomainError("omega must be >= 0");
  return omega + (1.0 - p) * (omega + 1.0) / p;
}

struct PPCompressed {
  SurrogateVector value;  ///< (U/p) Quant(s)
  bool sent = false;
  std::size_t bits = 0;
};

/// Partial participation seen as one more compression layer.
inline PPCompressed pp_compress(const CompressionOperator& op, double p, const SurrogateVector& s, Rng& rng) {
  if (!(p > 0.0 && p <= 1.0)) throw DomainError("participation probability must lie in (0, 1]");
  if (!rng.bernoulli(p)) return {SurrogateVector::zeros_like(s), false, 0};
  Compressed c = compress(op, s, rng);
  c.value *= 1.0 / p;
  return {std::move(c.value), true, c.bits};
}

/// Monte Carlo estimate of E||Q(s) - s||^2 / ||s||^2 averaged over the given vectors.
inline double estimate_omega(const CompressionOperator& op, const std::vector<SurrogateVector>& vectors,
                             std::size_t trials, Rng& rng) {
  double acc = 0.0;
  std::size_t used = 0;
  for (const SurrogateVector& s : vectors) {
    const double n2 = s.squared_norm();
    if (n2 == 0.0) continue;
    double err = 0.0;
    for (std::size_t t = 0; t < trials; ++t) err += (compress(op, s, rng).value - s).squared_norm();
    acc += err / static_cast<double>(trials) / n2;
    ++used;
  }
  return used == 0 ? 0.0 : acc / static_cast<double>(used);
}

}  // namespace fedmm::federation
