#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "btnn/bit_buffer.hpp"
#include "btnn/bit_matrix.hpp"

namespace {

using namespace btnn;

std::vector<float> random_pm1(std::mt19937_64& rng, std::size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = (rng() & 1) ? 1.0f : -1.0f;
  return v;
}

BitBuffer random_bits(std::mt19937_64& rng, std::size_t n) {
  BitBuffer b(n);
  for (auto& w : b.words()) w = rng();
  b.mask_tail();
  return b;
}

TEST(PackSigns, MixedSigns) {
  std::vector<float> v{1.0f, -2.0f, 3.5f, -0.25f};
  BitBuffer b = pack_signs(v);
  ASSERT_EQ(b.n_bits(), 4u);
  EXPECT_EQ(b.words()[0], 0x5u);
}

TEST(PackSigns, ZeroMapsToPlusOne) {
  std::vector<double> v{0.0, -0.0};
  BitBuffer b = pack_signs(v);
  EXPECT_TRUE(b.get(0));
  EXPECT_TRUE(b.get(1));
}

TEST(PackSigns, AllNegativeGivesZeroWords) {
  std::vector<float> v(200, -1.0f);
  BitBuffer b = pack_signs(v);
  for (auto w : b.words()) EXPECT_EQ(w, 0u);
}

TEST(PackSigns, RejectsNonFinite) {
  std::vector<float> nan_v{1.0f, std::numeric_limits<float>::quiet_NaN()};
  std::vector<float> inf_v{std::numeric_limits<float>::infinity()};
  EXPECT_THROW(pack_signs(nan_v), invalid_input);
  EXPECT_THROW(pack_signs(inf_v), invalid_input);
}

TEST(BitBuffer, TailBitsStayZero) {
  BitBuffer b(70);
  b.set(69, true);
  BitBuffer inv = b.inverted();
  EXPECT_EQ(inv.popcount(), 69u);
  EXPECT_FALSE(inv.get(69));
  // bits 70..127 of the second word must be clear
  EXPECT_EQ(inv.words()[1] >> 6, 0u);
}

TEST(DotPm1, IdenticalAndOppositeVectors) {
  std::mt19937_64 rng(7);
  BitBuffer a = random_bits(rng, 128);
  EXPECT_EQ(dot_pm1(a, a, 128), 128);
  EXPECT_EQ(dot_pm1(a, a.inverted(), 128), -128);
}

TEST(DotPm1, MatchesFloatDot) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 257;
    auto fa = random_pm1(rng, n);
    auto fb = random_pm1(rng, n);
    double ref = 0;
    for (std::size_t i = 0; i < n; ++i) ref += double(fa[i]) * double(fb[i]);
    BitBuffer a = pack_signs(fa);
    BitBuffer b = pack_signs(fb);
    EXPECT_EQ(dot_pm1(a, b, n), static_cast<std::int64_t>(ref));
  }
}

TEST(DotPm1, XnorFormAndParity) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 100 + rep;
    BitBuffer a = random_bits(rng, n);
    BitBuffer b = random_bits(rng, n);
    const std::int64_t d = dot_pm1(a, b, n);
    // 2*popc(xnor) - n form
    std::int64_t xnor_popc = 0;
    for (std::size_t i = 0; i < n; ++i) xnor_popc += (a.get(i) == b.get(i));
    EXPECT_EQ(d, 2 * xnor_popc - static_cast<std::int64_t>(n));
    EXPECT_LE(std::abs(d), static_cast<std::int64_t>(n));
    EXPECT_EQ((static_cast<std::int64_t>(n) - d) % 2, 0);
  }
}

TEST(DotPm1, RejectsShortOperands) {
  BitBuffer a(64), b(32);
  EXPECT_THROW(dot_pm1(a, b, 64), invalid_input);
}

TEST(FsbGeometry, KnownIndexMapping) {
  FsbGeometry g{2, 4};
  EXPECT_EQ(g.row_tiled_index(0, 0, 8), 0u);
  EXPECT_EQ(g.row_tiled_index(2, 5, 8), 25u);
  // transposed analog: swap roles of r and c
  EXPECT_EQ(g.col_tiled_index(5, 2, 8), 25u);
  EXPECT_EQ(g.col_tiled_index(0, 0, 8), 0u);
}

TEST(FsbGeometry, DefaultTileIsWordMultiple) {
  FsbGeometry g;
  EXPECT_EQ(g.bh, 8u);
  EXPECT_EQ(g.bw, 128u);
  EXPECT_EQ(g.tile_bits() % 64, 0u);
}

TEST(BitMatrix, PaddedDims) {
  BitMatrix row(10, 200, Layout::RowPacked);
  EXPECT_EQ(row.padded_rows(), 10u);
  EXPECT_EQ(row.padded_cols(), 256u);
  BitMatrix col(200, 10, Layout::ColPacked);
  EXPECT_EQ(col.padded_rows(), 256u);
  EXPECT_EQ(col.padded_cols(), 10u);
  BitMatrix fr(10, 200, Layout::FsbRow);
  EXPECT_EQ(fr.padded_rows(), 16u);
  EXPECT_EQ(fr.padded_cols(), 256u);
  BitMatrix fc(200, 10, Layout::FsbCol);
  EXPECT_EQ(fc.padded_rows(), 256u);
  EXPECT_EQ(fc.padded_cols(), 16u);
}

TEST(BitMatrix, RejectsBadShapes) {
  EXPECT_THROW(BitMatrix(0, 4, Layout::RowPacked), invalid_input);
  EXPECT_THROW(BitMatrix(4, 0, Layout::ColPacked), invalid_input);
  // 2x4 tile is 8 bits, not a whole word
  EXPECT_THROW(BitMatrix(4, 8, Layout::FsbRow, FsbGeometry{2, 4}), unsupported_shape);
}

TEST(BitMatrix, FsbIndexIsBijective) {
  BitMatrix m(20, 300, Layout::FsbRow);
  std::vector<bool> seen(m.storage_bits(), false);
  for (std::size_t r = 0; r < 20; ++r) {
    for (std::size_t c = 0; c < 300; ++c) {
      const std::size_t idx = m.bit_index(r, c);
      ASSERT_LT(idx, m.storage_bits());
      ASSERT_FALSE(seen[idx]);
      seen[idx] = true;
    }
  }
}

TEST(BitMatrix, PackMatrixMatchesPackSigns) {
  std::mt19937_64 rng(17);
  auto vals = random_pm1(rng, 3 * 130);
  BitMatrix m = pack_matrix(vals, 3, 130, Layout::RowPacked);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 130; ++c)
      EXPECT_EQ(m.get(r, c), vals[r * 130 + c] >= 0.0f);
  EXPECT_THROW(pack_matrix(vals, 4, 130, Layout::RowPacked), invalid_input);
}

TEST(Fsb, RoundTripProperty) {
  std::mt19937_64 rng(23);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t rows = 1 + rng() % 200;
    const std::size_t cols = 1 + rng() % 200;
    const Layout packed = (rep & 1) ? Layout::RowPacked : Layout::ColPacked;
    BitMatrix m(rows, cols, packed);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        if (rng() & 1) m.set(r, c, true);
    BitMatrix tiled = to_fsb(m);
    BitMatrix back = from_fsb(tiled);
    ASSERT_EQ(back.layout(), packed);
    ASSERT_TRUE(back.bits() == m.bits()) << "rep " << rep;
  }
}

TEST(Fsb, GenericAndWordPathsAgree) {
  std::mt19937_64 rng(29);
  // bw=64: padded widths match at cols=256 (word path) but not 192 (generic)
  for (std::size_t cols : {192u, 256u}) {
    BitMatrix m(17, cols, Layout::RowPacked);
    for (std::size_t r = 0; r < 17; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        if (rng() & 1) m.set(r, c, true);
    const FsbGeometry g{4, 64};
    BitMatrix tiled = to_fsb(m, g);
    for (std::size_t r = 0; r < 17; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        ASSERT_EQ(tiled.get(r, c), m.get(r, c));
    BitMatrix back = from_fsb(tiled);
    ASSERT_TRUE(back.bits() == m.bits());
  }
}

TEST(Fsb, PadBitsAreZeroAfterConversion) {
  std::mt19937_64 rng(31);
  BitMatrix m(9, 129, Layout::RowPacked);
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t c = 0; c < 129; ++c)
      if (rng() & 1) m.set(r, c, true);
  BitMatrix tiled = to_fsb(m);
  std::size_t logical = 0;
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t c = 0; c < 129; ++c) logical += tiled.get(r, c);
  EXPECT_EQ(tiled.bits().popcount(), logical);
}

TEST(Fsb, ConversionRejectsWrongDirection) {
  BitMatrix packed(8, 128, Layout::RowPacked);
  BitMatrix tiled = to_fsb(packed);
  EXPECT_THROW(to_fsb(tiled), invalid_input);
  EXPECT_THROW(from_fsb(packed), invalid_input);
}

}  // namespace
