#pragma once

#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "btnn/bit_buffer.hpp"
#include "btnn/common.hpp"

namespace btnn {

/// How a matrix's bits are ordered in its backing buffer.
///  RowPacked: row-major, each row padded to a multiple of 128 bits.
///  ColPacked: column-major, each column padded to a multiple of 128 bits.
///  FsbRow:    row-major source regrouped into bh x bw bit tiles, tiles in
///             row-major order, bits inside a tile in row-major order.
///  FsbCol:    the transposed analog for column-major sources (tiles cover
///             bh columns by bw rows).
enum class Layout : std::uint8_t { RowPacked, ColPacked, FsbRow, FsbCol };

inline const char* layout_name(Layout l) {
  switch (l) {
    case Layout::RowPacked: return "row_packed";
    case Layout::ColPacked: return "col_packed";
    case Layout::FsbRow: return "fsb_row";
    case Layout::FsbCol: return "fsb_col";
  }
  return "?";
}

constexpr std::size_t kPackAlign = 128;

/// Tile shape for the fixed-stride-bit layouts.
struct FsbGeometry {
  std::size_t bh = 8;
  std::size_t bw = 128;

  constexpr std::size_t tile_bits() const { return bh * bw; }

  /// Bit offset of logical (r, c) in a row-tiled buffer whose padded width
  /// is padded_cols (a multiple of bw). Pure index math, no size checks.
  constexpr std::size_t row_tiled_index(std::size_t r, std::size_t c,
                                        std::size_t padded_cols) const {
    const std::size_t tile = (r / bh) * (padded_cols / bw) + c / bw;
    return tile * tile_bits() + (r % bh) * bw + (c % bw);
  }

  /// Bit offset of logical (r, c) in a column-tiled buffer whose padded
  /// height is padded_rows (a multiple of bw).
  constexpr std::size_t col_tiled_index(std::size_t r, std::size_t c,
                                        std::size_t padded_rows) const {
    const std::size_t tile = (c / bh) * (padded_rows / bw) + r / bw;
    return tile * tile_bits() + (c % bh) * bw + (r % bw);
  }
};

/// A 2-d bit array with a declared layout. Logical size is rows x cols;
/// storage is padded per layout and pad bits are always zero.
class BitMatrix {
public:
  BitMatrix() = default;

  BitMatrix(std::size_t rows, std::size_t cols, Layout layout, FsbGeometry geo = {})
      : rows_(rows), cols_(cols), layout_(layout), geo_(geo) {
    if (rows == 0 || cols == 0) throw invalid_input("BitMatrix: zero dimension");
    if (layout == Layout::FsbRow || layout == Layout::FsbCol) {
      if (geo.bh == 0 || geo.bw == 0)
        throw invalid_input("BitMatrix: zero tile dimension");
      if (geo.tile_bits() % 64 != 0)
        throw unsupported_shape("BitMatrix: tile size " + std::to_string(geo.bh) + "x" +
                                std::to_string(geo.bw) + " is not a whole number of words");
    }
    bits_ = BitBuffer(storage_bits());
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Layout layout() const { return layout_; }
  const FsbGeometry& geometry() const { return geo_; }

  /// Storage height: logical rows, padded per layout.
  std::size_t padded_rows() const {
    switch (layout_) {
      case Layout::RowPacked: return rows_;
      case Layout::ColPacked: return round_up(rows_, kPackAlign);
      case Layout::FsbRow: return round_up(rows_, geo_.bh);
      case Layout::FsbCol: return round_up(rows_, geo_.bw);
    }
    return rows_;
  }

  /// Storage width: logical cols, padded per layout.
  std::size_t padded_cols() const {
    switch (layout_) {
      case Layout::RowPacked: return round_up(cols_, kPackAlign);
      case Layout::ColPacked: return cols_;
      case Layout::FsbRow: return round_up(cols_, geo_.bw);
      case Layout::FsbCol: return round_up(cols_, geo_.bh);
    }
    return cols_;
  }

  std::size_t storage_bits() const { return padded_rows() * padded_cols(); }

  std::size_t bit_index(std::size_t r, std::size_t c) const {
    switch (layout_) {
      case Layout::RowPacked: return r * padded_cols() + c;
      case Layout::ColPacked: return c * padded_rows() + r;
      case Layout::FsbRow: return geo_.row_tiled_index(r, c, padded_cols());
      case Layout::FsbCol: return geo_.col_tiled_index(r, c, padded_rows());
    }
    return 0;
  }

  bool get(std::size_t r, std::size_t c) const { return bits_.get(bit_index(r, c)); }
  void set(std::size_t r, std::size_t c, bool v) { bits_.set(bit_index(r, c), v); }

  BitBuffer& bits() { return bits_; }
  const BitBuffer& bits() const { return bits_; }

  const std::uint64_t* data() const { return bits_.data(); }
  std::uint64_t* data() { return bits_.data(); }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Layout layout_ = Layout::RowPacked;
  FsbGeometry geo_;
  BitBuffer bits_;
};

/// Sign-binarizes a row-major rows x cols float array into the given layout.
template <std::floating_point T>
BitMatrix pack_matrix(std::span<const T> values, std::size_t rows, std::size_t cols,
                      Layout layout, FsbGeometry geo = {}) {
  if (values.size() != rows * cols)
    throw invalid_input("pack_matrix: value count does not match rows*cols");
  BitMatrix out(rows, cols, layout, geo);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const T v = values[r * cols + c];
      if (!std::isfinite(v)) throw invalid_input("pack_matrix: non-finite value");
      if (v >= T{0}) out.set(r, c, true);
    }
  }
  return out;
}

template <std::floating_point T>
BitMatrix pack_matrix(const std::vector<T>& values, std::size_t rows, std::size_t cols,
                      Layout layout, FsbGeometry geo = {}) {
  return pack_matrix(std::span<const T>(values), rows, cols, layout, geo);
}

namespace detail {

inline void copy_bits_generic(const BitMatrix& src, BitMatrix& dst) {
  for (std::size_t r = 0; r < src.rows(); ++r)
    for (std::size_t c = 0; c < src.cols(); ++c)
      if (src.get(r, c)) dst.set(r, c, true);
}

// Word-block copy between RowPacked and FsbRow when every tile row segment
// is word aligned in both buffers. src/dst are the two backing stores in
// either order; returns false when the fast path does not apply.
inline bool copy_row_tiled_words(const BitMatrix& packed, const BitMatrix& tiled,
                                 const std::uint64_t* src, std::uint64_t* dst,
                                 bool to_tiled) {
  const FsbGeometry& g = tiled.geometry();
  if (g.bw % 64 != 0) return false;
  if (packed.padded_cols() != tiled.padded_cols()) return false;
  const std::size_t words_per_seg = g.bw / 64;
  const std::size_t packed_row_words = packed.padded_cols() / 64;
  const std::size_t tiles_per_row = tiled.padded_cols() / g.bw;
  for (std::size_t r = 0; r < packed.rows(); ++r) {
    const std::size_t tr = r / g.bh, rr = r % g.bh;
    for (std::size_t tc = 0; tc < tiles_per_row; ++tc) {
      const std::size_t packed_w = r * packed_row_words + tc * words_per_seg;
      const std::size_t tiled_w =
          ((tr * tiles_per_row + tc) * g.tile_bits() + rr * g.bw) / 64;
      for (std::size_t i = 0; i < words_per_seg; ++i) {
        if (to_tiled)
          dst[tiled_w + i] = src[packed_w + i];
        else
          dst[packed_w + i] = src[tiled_w + i];
      }
    }
  }
  return true;
}

// Same for ColPacked and FsbCol (columns play the role of rows).
inline bool copy_col_tiled_words(const BitMatrix& packed, const BitMatrix& tiled,
                                 const std::uint64_t* src, std::uint64_t* dst,
                                 bool to_tiled) {
  const FsbGeometry& g = tiled.geometry();
  if (g.bw % 64 != 0) return false;
  if (packed.padded_rows() != tiled.padded_rows()) return false;
  const std::size_t words_per_seg = g.bw / 64;
  const std::size_t packed_col_words = packed.padded_rows() / 64;
  const std::size_t tiles_per_col = tiled.padded_rows() / g.bw;
  for (std::size_t c = 0; c < packed.cols(); ++c) {
    const std::size_t tc = c / g.bh, cc = c % g.bh;
    for (std::size_t rb = 0; rb < tiles_per_col; ++rb) {
      const std::size_t packed_w = c * packed_col_words + rb * words_per_seg;
      const std::size_t tiled_w =
          ((tc * tiles_per_col + rb) * g.tile_bits() + cc * g.bw) / 64;
      for (std::size_t i = 0; i < words_per_seg; ++i) {
        if (to_tiled)
          dst[tiled_w + i] = src[packed_w + i];
        else
          dst[packed_w + i] = src[tiled_w + i];
      }
    }
  }
  return true;
}

}  // namespace detail

/// RowPacked -> FsbRow or ColPacked -> FsbCol.
inline BitMatrix to_fsb(const BitMatrix& src, FsbGeometry geo = {}) {
  Layout target;
  switch (src.layout()) {
    case Layout::RowPacked: target = Layout::FsbRow; break;
    case Layout::ColPacked: target = Layout::FsbCol; break;
    default: throw invalid_input("to_fsb: source is already tiled");
  }
  BitMatrix out(src.rows(), src.cols(), target, geo);
  const bool fast = target == Layout::FsbRow
                        ? detail::copy_row_tiled_words(src, out, src.data(), out.data(), true)
                        : detail::copy_col_tiled_words(src, out, src.data(), out.data(), true);
  if (!fast) detail::copy_bits_generic(src, out);
  return out;
}

/// FsbRow -> RowPacked or FsbCol -> ColPacked.
inline BitMatrix from_fsb(const BitMatrix& src) {
  Layout target;
  switch (src.layout()) {
    case Layout::FsbRow: target = Layout::RowPacked; break;
    case Layout::FsbCol: target = Layout::ColPacked; break;
    default: throw invalid_input("from_fsb: source is not tiled");
  }
  BitMatrix out(src.rows(), src.cols(), target);
  const bool fast = src.layout() == Layout::FsbRow
                        ? detail::copy_row_tiled_words(out, src, src.data(), out.data(), false)
                        : detail::copy_col_tiled_words(out, src, src.data(), out.data(), false);
  if (!fast) detail::copy_bits_generic(src, out);
  return out;
}

}  // namespace btnn
