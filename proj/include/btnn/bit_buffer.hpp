#pragma once

#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <vector>

#include "btnn/common.hpp"

namespace btnn {

/// Packed bit storage. Logical bit b lives in word b/64 at position b%64,
/// LSB first. Bits at indices >= n_bits (the trailing pad of the last word)
/// are kept zero at all times.
class BitBuffer {
public:
  BitBuffer() = default;

  explicit BitBuffer(std::size_t n_bits)
      : n_bits_(n_bits), words_(ceil_div(n_bits, 64), 0) {}

  std::size_t n_bits() const { return n_bits_; }
  std::size_t n_words() const { return words_.size(); }

  std::span<const std::uint64_t> words() const { return words_; }
  std::span<std::uint64_t> words() { return words_; }

  const std::uint64_t* data() const { return words_.data(); }
  std::uint64_t* data() { return words_.data(); }

  bool get(std::size_t bit) const {
    return (words_[bit >> 6] >> (bit & 63)) & 1u;
  }

  void set(std::size_t bit, bool value) {
    const std::uint64_t mask = std::uint64_t{1} << (bit & 63);
    if (value)
      words_[bit >> 6] |= mask;
    else
      words_[bit >> 6] &= ~mask;
  }

  void set(std::size_t bit) { words_[bit >> 6] |= std::uint64_t{1} << (bit & 63); }

  /// Number of set bits over the whole logical range.
  std::size_t popcount() const {
    std::size_t n = 0;
    for (std::uint64_t w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
  }

  /// Flips every logical bit; pad bits stay zero.
  BitBuffer inverted() const {
    BitBuffer out(n_bits_);
    for (std::size_t i = 0; i < words_.size(); ++i) out.words_[i] = ~words_[i];
    out.mask_tail();
    return out;
  }

  /// Zeroes any bits at and beyond n_bits in the last word.
  void mask_tail() {
    const std::size_t rem = n_bits_ & 63;
    if (rem != 0 && !words_.empty()) words_.back() &= (std::uint64_t{1} << rem) - 1;
  }

  bool operator==(const BitBuffer& other) const = default;

private:
  std::size_t n_bits_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Sign binarization: bit b = 1 iff values[b] >= 0, so bit-1 encodes +1 and
/// bit-0 encodes -1 (the sign of zero is +1).
template <std::floating_point T>
BitBuffer pack_signs(std::span<const T> values) {
  BitBuffer out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]))
      throw invalid_input("pack_signs: non-finite value at index " + std::to_string(i));
    if (values[i] >= T{0}) out.set(i);
  }
  return out;
}

template <std::floating_point T>
BitBuffer pack_signs(const std::vector<T>& values) {
  return pack_signs(std::span<const T>(values));
}

/// popcount(a XOR b) over the first n bits.
inline std::int64_t xor_popcount(const BitBuffer& a, const BitBuffer& b, std::size_t n) {
  const std::size_t full = n >> 6;
  std::int64_t acc = 0;
  const std::uint64_t* wa = a.data();
  const std::uint64_t* wb = b.data();
  for (std::size_t i = 0; i < full; ++i) acc += std::popcount(wa[i] ^ wb[i]);
  const std::size_t rem = n & 63;
  if (rem != 0) {
    const std::uint64_t mask = (std::uint64_t{1} << rem) - 1;
    acc += std::popcount((wa[full] ^ wb[full]) & mask);
  }
  return acc;
}

/// The +1/-1 dot product of two bit-encoded vectors: n - 2*popc(a xor b).
inline std::int64_t dot_pm1(const BitBuffer& a, const BitBuffer& b, std::size_t n) {
  if (a.n_bits() < n || b.n_bits() < n)
    throw invalid_input("dot_pm1: operands shorter than n");
  return static_cast<std::int64_t>(n) - 2 * xor_popcount(a, b, n);
}

}  // namespace btnn
