#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "btnn/bit_matrix.hpp"
#include "btnn/common.hpp"
#include "btnn/layer_math.hpp"

namespace btnn {

struct IntMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<std::int32_t> v;

  IntMatrix() = default;
  IntMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0) {}

  std::int32_t& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  std::int32_t at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

  bool operator==(const IntMatrix&) const = default;
};

/// Naive: word-serial dot per output element.
/// Blocked: stages row/col/depth panels to reuse operand words.
/// Fsb: walks tiled operands with unit stride along the inner dimension.
enum class BmmVariant : std::uint8_t { Naive, Blocked, Fsb };

inline const char* variant_name(BmmVariant v) {
  switch (v) {
    case BmmVariant::Naive: return "naive";
    case BmmVariant::Blocked: return "blocked";
    case BmmVariant::Fsb: return "fsb";
  }
  return "?";
}

struct BmmBlocking {
  std::size_t rows = 8;
  std::size_t cols = 8;
  std::size_t k_bits = 1024;
};

struct BmmOptions {
  BmmVariant variant = BmmVariant::Blocked;
  BmmBlocking blocking{};
  int threads = 0;
};

namespace detail {

inline void check_bmm_operands(const BitMatrix& a, const BitMatrix& b, BmmVariant variant) {
  if (a.cols() != b.rows())
    throw invalid_input("bmm: inner dimensions differ: " + std::to_string(a.cols()) +
                        " vs " + std::to_string(b.rows()));
  if (variant == BmmVariant::Fsb) {
    if (a.layout() != Layout::FsbRow || b.layout() != Layout::FsbCol)
      throw invalid_input("bmm: fsb variant requires fsb_row A and fsb_col B");
    const FsbGeometry& ga = a.geometry();
    const FsbGeometry& gb = b.geometry();
    if (ga.bh != gb.bh || ga.bw != gb.bw)
      throw unsupported_shape("bmm: operand tile shapes differ");
    if (ga.bw % 64 != 0)
      throw unsupported_shape("bmm: tile width must be a multiple of 64");
  } else {
    if (a.layout() != Layout::RowPacked || b.layout() != Layout::ColPacked)
      throw invalid_input("bmm: word variants require row_packed A and col_packed B");
  }
  if (a.padded_cols() != b.padded_rows())
    throw unsupported_shape("bmm: padded inner widths differ");
}

// Each kernel hands sink(i, j, acc) the xor popcount over the padded inner
// width. Work splits over contiguous output rows, so per-row sinks never race.

template <class Sink>
void bmm_naive(const BitMatrix& a, const BitMatrix& b, int threads, Sink&& sink) {
  const std::size_t kw = a.padded_cols() / 64;
  const std::size_t k = b.cols();
  const std::uint64_t* wa = a.data();
  const std::uint64_t* wb = b.data();
  parallel_chunks(a.rows(), threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const std::uint64_t* ra = wa + i * kw;
      for (std::size_t j = 0; j < k; ++j) {
        const std::uint64_t* cb = wb + j * kw;
        std::int32_t acc = 0;
        for (std::size_t w = 0; w < kw; ++w)
          acc += std::popcount(ra[w] ^ cb[w]);
        sink(i, j, acc);
      }
    }
  });
}

template <class Sink>
void bmm_blocked(const BitMatrix& a, const BitMatrix& b, const BmmBlocking& blk,
                 int threads, Sink&& sink) {
  if (blk.rows == 0 || blk.cols == 0 || blk.k_bits == 0 || blk.k_bits % 64 != 0)
    throw invalid_input("bmm: blocking must be nonzero with k_bits a multiple of 64");
  const std::size_t kw = a.padded_cols() / 64;
  const std::size_t m = a.rows();
  const std::size_t k = b.cols();
  const std::size_t blk_words = blk.k_bits / 64;
  const std::uint64_t* wa = a.data();
  const std::uint64_t* wb = b.data();
  const std::size_t n_row_blocks = ceil_div(m, blk.rows);
  parallel_chunks(n_row_blocks, threads, [&](std::size_t b0, std::size_t b1) {
    std::vector<std::int32_t> acc(blk.rows * k);
    for (std::size_t rb = b0; rb < b1; ++rb) {
      const std::size_t i0 = rb * blk.rows;
      const std::size_t i1 = std::min(m, i0 + blk.rows);
      std::fill(acc.begin(), acc.end(), 0);
      for (std::size_t w0 = 0; w0 < kw; w0 += blk_words) {
        const std::size_t w1 = std::min(kw, w0 + blk_words);
        for (std::size_t j0 = 0; j0 < k; j0 += blk.cols) {
          const std::size_t j1 = std::min(k, j0 + blk.cols);
          for (std::size_t i = i0; i < i1; ++i) {
            const std::uint64_t* ra = wa + i * kw;
            std::int32_t* arow = acc.data() + (i - i0) * k;
            for (std::size_t j = j0; j < j1; ++j) {
              const std::uint64_t* cb = wb + j * kw;
              std::int32_t s = 0;
              for (std::size_t w = w0; w < w1; ++w)
                s += std::popcount(ra[w] ^ cb[w]);
              arow[j] += s;
            }
          }
        }
      }
      for (std::size_t i = i0; i < i1; ++i)
        for (std::size_t j = 0; j < k; ++j)
          sink(i, j, acc[(i - i0) * k + j]);
    }
  });
}

template <class Sink>
void bmm_fsb(const BitMatrix& a, const BitMatrix& b, int threads, Sink&& sink) {
  const FsbGeometry g = a.geometry();
  const std::size_t seg = g.bw / 64;
  const std::size_t tile_words = g.tile_bits() / 64;
  const std::size_t m = a.rows();
  const std::size_t k = b.cols();
  const std::size_t kb_count = a.padded_cols() / g.bw;
  const std::size_t n_trows = ceil_div(m, g.bh);
  const std::size_t n_tcols = ceil_div(k, g.bh);
  const std::uint64_t* wa = a.data();
  const std::uint64_t* wb = b.data();
  parallel_chunks(n_trows, threads, [&](std::size_t t0, std::size_t t1) {
    std::vector<std::int32_t> acc(g.bh * g.bh);
    for (std::size_t tr = t0; tr < t1; ++tr) {
      const std::size_t i0 = tr * g.bh;
      const std::size_t i1 = std::min(m, i0 + g.bh);
      const std::uint64_t* pa = wa + tr * kb_count * tile_words;
      for (std::size_t tc = 0; tc < n_tcols; ++tc) {
        const std::size_t j0 = tc * g.bh;
        const std::size_t j1 = std::min(k, j0 + g.bh);
        const std::uint64_t* pb = wb + tc * kb_count * tile_words;
        std::fill(acc.begin(), acc.end(), 0);
        for (std::size_t kb = 0; kb < kb_count; ++kb) {
          const std::uint64_t* ta = pa + kb * tile_words;
          const std::uint64_t* tb = pb + kb * tile_words;
          for (std::size_t rr = 0; rr < i1 - i0; ++rr) {
            const std::uint64_t* ra = ta + rr * seg;
            for (std::size_t cc = 0; cc < j1 - j0; ++cc) {
              const std::uint64_t* cb = tb + cc * seg;
              std::int32_t s = 0;
              for (std::size_t w = 0; w < seg; ++w)
                s += std::popcount(ra[w] ^ cb[w]);
              acc[rr * g.bh + cc] += s;
            }
          }
        }
        for (std::size_t i = i0; i < i1; ++i)
          for (std::size_t j = j0; j < j1; ++j)
            sink(i, j, acc[(i - i0) * g.bh + (j - j0)]);
      }
    }
  });
}

template <class Sink>
void bmm_accumulate(const BitMatrix& a, const BitMatrix& b, const BmmOptions& opt,
                    Sink&& sink) {
  check_bmm_operands(a, b, opt.variant);
  const int threads = resolve_threads(opt.threads);
  switch (opt.variant) {
    case BmmVariant::Naive: bmm_naive(a, b, threads, sink); break;
    case BmmVariant::Blocked: bmm_blocked(a, b, opt.blocking, threads, sink); break;
    case BmmVariant::Fsb: bmm_fsb(a, b, threads, sink); break;
  }
}

}  // namespace detail

/// Raw xor-popcount accumulators, no pad correction. The inner dimension
/// must already be a whole number of 128-bit groups.
inline IntMatrix bmm_raw(const BitMatrix& a, const BitMatrix& b,
                         const BmmOptions& opt = {}) {
  if (a.cols() % kPackAlign != 0)
    throw unsupported_shape("bmm_raw: inner dimension must be a multiple of 128");
  IntMatrix out(a.rows(), b.cols());
  detail::bmm_accumulate(a, b, opt,
                         [&](std::size_t i, std::size_t j, std::int32_t acc) {
                           out.at(i, j) = acc;
                         });
  return out;
}

/// +1/-1 products: v = n - 2*popc(a xor b) with n the logical inner dim.
/// Pad bits are zero in both operands, so they add nothing to the popcount
/// and the correction stays exact for any logical n.
inline IntMatrix bmm_pm1(const BitMatrix& a, const BitMatrix& b,
                         const BmmOptions& opt = {}) {
  const auto n = static_cast<std::int32_t>(a.cols());
  IntMatrix out(a.rows(), b.cols());
  detail::bmm_accumulate(a, b, opt,
                         [&](std::size_t i, std::size_t j, std::int32_t acc) {
                           out.at(i, j) = n - 2 * acc;
                         });
  return out;
}

/// First-layer fully connected: real inputs (n rows over d) against +1/-1
/// weights (k rows over d), accumulated in doubles over d in order.
inline std::vector<double> bwn_fc(std::span<const float> x, std::size_t n, std::size_t d,
                                  std::span<const float> w_pm1, std::size_t k,
                                  int threads = 0) {
  if (x.size() != n * d || w_pm1.size() != k * d)
    throw invalid_input("bwn_fc: operand sizes do not match dimensions");
  std::vector<double> out(n * k, 0.0);
  parallel_chunks(n, resolve_threads(threads), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const float* xr = x.data() + i * d;
      for (std::size_t j = 0; j < k; ++j) {
        const float* wr = w_pm1.data() + j * d;
        double acc = 0.0;
        for (std::size_t dd = 0; dd < d; ++dd)
          acc += static_cast<double>(xr[dd]) * static_cast<double>(wr[dd]);
        out[i * k + j] = acc;
      }
    }
  });
  return out;
}

/// Product fused with output binarization. Empty thresholds means the plain
/// sign rule (v >= 0); otherwise one threshold per output column. Output
/// layout follows A's family.
inline BitMatrix bmm_pm1_bin(const BitMatrix& a, const BitMatrix& b,
                             const BmmOptions& opt = {},
                             std::span<const Threshold> thresholds = {}) {
  if (!thresholds.empty() && thresholds.size() != b.cols())
    throw invalid_input("bmm_pm1_bin: need one threshold per output column");
  const Layout out_layout =
      a.layout() == Layout::FsbRow ? Layout::FsbRow : Layout::RowPacked;
  BitMatrix out(a.rows(), b.cols(), out_layout, a.geometry());
  const auto n = static_cast<std::int32_t>(a.cols());
  detail::bmm_accumulate(a, b, opt,
                         [&](std::size_t i, std::size_t j, std::int32_t acc) {
                           const std::int32_t v = n - 2 * acc;
                           const bool bit = thresholds.empty()
                                                ? v >= 0
                                                : thresholds[j].fire(v);
                           if (bit) out.set(i, j, true);
                         });
  return out;
}

}  // namespace btnn
