#pragma once

// Byte-exact client-to-server message format (little-endian):
//   header        client id u32 | round u32 | codec tag u8
//   identity      q x float64
//   rand-k        k u32 | k x (index u32, value float64)
//   quantization  per block: maxabs float64 | count x b-bit codes, LSB first,
//                 padded to a byte boundary
// Block sizes and b are known to both ends from the problem and the config.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <vector>

#include "fedmm/core/errors.hpp"
#include "fedmm/core/surrogate.hpp"
#include "fedmm/federation/compression.hpp"

namespace fedmm::federation {

inline constexpr std::size_t kHeaderBits = 32 + 32 + 8;

struct WireMessage {
  std::uint32_t client = 0;
  std::uint32_t round = 0;
  EncodedPayload payload;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void put_f64(std::vector<std::uint8_t>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf_(b) {}
  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const std::uint8_t* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw DomainError("truncated wire message");
  }
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_message(std::uint32_t client, std::uint32_t round,
                                                   const CompressionOperator& op, const Layout& layout,
                                                   const EncodedPayload& e) {
  std::vector<std::uint8_t> out;
  out.reserve((kHeaderBits + op.body_bits(layout)) / 8);
  detail::put_u32(out, client);
  detail::put_u32(out, round);
  out.push_back(static_cast<std::uint8_t>(e.tag));
  switch (e.tag) {
    case CodecTag::identity:
      for (double v : e.values) detail::put_f64(out, v);
      break;
    case CodecTag::rand_k:
      detail::put_u32(out, static_cast<std::uint32_t>(e.indices.size()));
      for (std::size_t i = 0; i < e.indices.size(); ++i) {
        detail::put_u32(out, e.indices[i]);
        detail::put_f64(out, e.values[i]);
      }
      break;
    case CodecTag::quantization: {
      const unsigned b = op.bits();
      std::size_t c = 0;
      for (std::size_t blk = 0; blk < layout.block_count(); ++blk) {
        detail::put_f64(out, e.block_scale.at(blk));
        const auto count = static_cast<std::size_t>(layout.blocks()[blk].size());
        std::vector<std::uint8_t> packed((count * b + 7) / 8, 0);
        std::size_t bit = 0;
        for (std::size_t j = 0; j < count; ++j, ++c) {
          const std::uint64_t code = e.codes.at(c);
          for (unsigned k = 0; k < b; ++k, ++bit) {
            if ((code >> k) & 1U) packed[bit / 8] |= static_cast<std::uint8_t>(1U << (bit % 8));
          }
        }
        out.insert(out.end(), packed.begin(), packed.end());
      }
      break;
    }
  }
  return out;
}

inline WireMessage deserialize_message(const std::vector<std::uint8_t>& bytes, const CompressionOperator& op,
                                       const Layout& layout) {
  detail::Reader r(bytes);
  WireMessage m;
  m.client = r.u32();
  m.round = r.u32();
  m.payload.tag = static_cast<CodecTag>(r.u8());
  if (m.payload.tag != op.tag()) throw DomainError("wire message codec tag mismatch");
  switch (m.payload.tag) {
    case CodecTag::identity:
      for (Eigen::Index i = 0; i < layout.size(); ++i) m.payload.values.push_back(r.f64());
      break;
    case CodecTag::rand_k: {
      const std::uint32_t k = r.u32();
      for (std::uint32_t i = 0; i < k; ++i) {
        m.payload.indices.push_back(r.u32());
        m.payload.values.push_back(r.f64());
      }
      break;
    }
    case CodecTag::quantization: {
      const unsigned b = op.bits();
      for (std::size_t blk = 0; blk < layout.block_count(); ++blk) {
        m.payload.block_scale.push_back(r.f64());
        const auto count = static_cast<std::size_t>(layout.blocks()[blk].size());
        const std::uint8_t* packed = r.take((count * b + 7) / 8);
        std::size_t bit = 0;
        for (std::size_t j = 0; j < count; ++j) {
          std::uint64_t code = 0;
          for (unsigned k = 0; k < b; ++k, ++bit) {
            code |= static_cast<std::uint64_t>((packed[bit / 8] >> (bit % 8)) & 1U) << k;
          }
          m.payload.codes.push_back(static_cast<std::uint32_t>(code));
        }
      }
      break;
    }
    default:
      throw DomainError("unknown codec tag on the wire");
  }
  if (!r.done()) throw DomainError("trailing bytes in wire message");
  return m;
}

}  // namespace fedmm::federation
