#pragma once

#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "btnn/bit_matrix.hpp"
#include "btnn/common.hpp"

namespace btnn {

/// Dense float activations, batch-major (the on-disk input order).
struct RealTensorNHWC {
  std::size_t batch = 0, height = 0, width = 0, channels = 0;
  std::vector<float> v;

  RealTensorNHWC() = default;
  RealTensorNHWC(std::size_t n, std::size_t h, std::size_t w, std::size_t c)
      : batch(n), height(h), width(w), channels(c), v(n * h * w * c, 0.0f) {}

  float& at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
    return v[((n * height + h) * width + w) * channels + c];
  }
  float at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const {
    return v[((n * height + h) * width + w) * channels + c];
  }
};

/// Integer conv outputs, site-major: ((p*Q + q)*N + n)*O + o.
struct IntTensorPQNO {
  std::size_t p = 0, q = 0, batch = 0, channels = 0;
  std::vector<std::int32_t> v;

  IntTensorPQNO() = default;
  IntTensorPQNO(std::size_t p_, std::size_t q_, std::size_t n, std::size_t o)
      : p(p_), q(q_), batch(n), channels(o), v(p_ * q_ * n * o, 0) {}

  std::int32_t& at(std::size_t pp, std::size_t qq, std::size_t n, std::size_t o) {
    return v[((pp * q + qq) * batch + n) * channels + o];
  }
  std::int32_t at(std::size_t pp, std::size_t qq, std::size_t n, std::size_t o) const {
    return v[((pp * q + qq) * batch + n) * channels + o];
  }

  bool operator==(const IntTensorPQNO&) const = default;
};

/// Double-precision analog, used for first-layer outputs and residual taps.
struct RealTensorPQNO {
  std::size_t p = 0, q = 0, batch = 0, channels = 0;
  std::vector<double> v;

  RealTensorPQNO() = default;
  RealTensorPQNO(std::size_t p_, std::size_t q_, std::size_t n, std::size_t o)
      : p(p_), q(q_), batch(n), channels(o), v(p_ * q_ * n * o, 0.0) {}

  double& at(std::size_t pp, std::size_t qq, std::size_t n, std::size_t o) {
    return v[((pp * q + qq) * batch + n) * channels + o];
  }
  double at(std::size_t pp, std::size_t qq, std::size_t n, std::size_t o) const {
    return v[((pp * q + qq) * batch + n) * channels + o];
  }
};

/// Bit activations. Each spatial site (h, w) holds an N x C bit plane:
/// row-packed when plain, row-tiled when tiled. Batch pads to 8 (or bh) rows
/// and channels to 128 (or bw) bits so all planes share one stride; pad bits
/// stay zero.
struct BitTensorHWNC {
  std::size_t height = 0, width = 0, batch = 0, channels = 0;
  bool tiled = false;
  FsbGeometry geo{};
  std::size_t n_pad = 0, c_pad = 0;
  BitBuffer bits;

  BitTensorHWNC() = default;
  BitTensorHWNC(std::size_t h, std::size_t w, std::size_t n, std::size_t c,
                bool tiled_ = false, FsbGeometry geo_ = {})
      : height(h), width(w), batch(n), channels(c), tiled(tiled_), geo(geo_) {
    if (h == 0 || w == 0 || n == 0 || c == 0)
      throw invalid_input("BitTensorHWNC: zero dimension");
    if (tiled && (geo.tile_bits() == 0 || geo.tile_bits() % 64 != 0))
      throw unsupported_shape("BitTensorHWNC: tile size is not a whole number of words");
    n_pad = round_up(n, tiled ? geo.bh : std::size_t{8});
    c_pad = round_up(c, tiled ? geo.bw : kPackAlign);
    bits = BitBuffer(h * w * plane_bits());
  }

  std::size_t plane_bits() const { return n_pad * c_pad; }
  std::size_t plane_words() const { return plane_bits() / 64; }
  std::size_t site(std::size_t h, std::size_t w) const { return h * width + w; }

  std::size_t bit_index(std::size_t h, std::size_t w, std::size_t n, std::size_t c) const {
    const std::size_t base = site(h, w) * plane_bits();
    if (!tiled) return base + n * c_pad + c;
    return base + geo.row_tiled_index(n, c, c_pad);
  }

  bool get(std::size_t h, std::size_t w, std::size_t n, std::size_t c) const {
    return bits.get(bit_index(h, w, n, c));
  }
  void set(std::size_t h, std::size_t w, std::size_t n, std::size_t c, bool v) {
    bits.set(bit_index(h, w, n, c), v);
  }

  const std::uint64_t* site_words(std::size_t h, std::size_t w) const {
    return bits.data() + site(h, w) * plane_words();
  }
  std::uint64_t* site_words(std::size_t h, std::size_t w) {
    return bits.data() + site(h, w) * plane_words();
  }
};

/// Bit filters. Each (r, s) tap holds a C x O bit plane: output channel o's
/// weights are contiguous over c when plain (column-packed), column-tiled
/// when tiled. Same pad discipline as activations.
struct BitFilterKKOC {
  std::size_t kh = 0, kw = 0, out_channels = 0, in_channels = 0;
  bool tiled = false;
  FsbGeometry geo{};
  std::size_t o_pad = 0, c_pad = 0;
  BitBuffer bits;

  BitFilterKKOC() = default;
  BitFilterKKOC(std::size_t kh_, std::size_t kw_, std::size_t o, std::size_t c,
                bool tiled_ = false, FsbGeometry geo_ = {})
      : kh(kh_), kw(kw_), out_channels(o), in_channels(c), tiled(tiled_), geo(geo_) {
    if (kh_ == 0 || kw_ == 0 || o == 0 || c == 0)
      throw invalid_input("BitFilterKKOC: zero dimension");
    if (tiled && (geo.tile_bits() == 0 || geo.tile_bits() % 64 != 0))
      throw unsupported_shape("BitFilterKKOC: tile size is not a whole number of words");
    o_pad = round_up(o, tiled ? geo.bh : std::size_t{8});
    c_pad = round_up(c, tiled ? geo.bw : kPackAlign);
    bits = BitBuffer(kh_ * kw_ * plane_bits());
  }

  std::size_t plane_bits() const { return o_pad * c_pad; }
  std::size_t plane_words() const { return plane_bits() / 64; }
  std::size_t plane(std::size_t r, std::size_t s) const { return r * kw + s; }

  std::size_t bit_index(std::size_t r, std::size_t s, std::size_t o, std::size_t c) const {
    const std::size_t base = plane(r, s) * plane_bits();
    if (!tiled) return base + o * c_pad + c;
    return base + geo.col_tiled_index(c, o, c_pad);
  }

  bool get(std::size_t r, std::size_t s, std::size_t o, std::size_t c) const {
    return bits.get(bit_index(r, s, o, c));
  }
  void set(std::size_t r, std::size_t s, std::size_t o, std::size_t c, bool v) {
    bits.set(bit_index(r, s, o, c), v);
  }

  const std::uint64_t* plane_words_ptr(std::size_t r, std::size_t s) const {
    return bits.data() + plane(r, s) * plane_words();
  }
};

/// Sign-binarizes NHWC floats straight into the target activation layout.
inline BitTensorHWNC pack_nhwc(const RealTensorNHWC& x, bool tiled = false,
                               FsbGeometry geo = {}) {
  BitTensorHWNC out(x.height, x.width, x.batch, x.channels, tiled, geo);
  for (std::size_t n = 0; n < x.batch; ++n)
    for (std::size_t h = 0; h < x.height; ++h)
      for (std::size_t w = 0; w < x.width; ++w)
        for (std::size_t c = 0; c < x.channels; ++c) {
          const float v = x.at(n, h, w, c);
          if (!std::isfinite(v)) throw invalid_input("pack_nhwc: non-finite value");
          if (v >= 0.0f) out.set(h, w, n, c, true);
        }
  return out;
}

/// Packs flat (r, s, o, c)-ordered float weights into the filter layout.
template <std::floating_point T>
BitFilterKKOC pack_filter(std::span<const T> w, std::size_t kh, std::size_t kw,
                          std::size_t o, std::size_t c, bool tiled = false,
                          FsbGeometry geo = {}) {
  if (w.size() != kh * kw * o * c)
    throw invalid_input("pack_filter: weight count does not match dimensions");
  BitFilterKKOC out(kh, kw, o, c, tiled, geo);
  std::size_t i = 0;
  for (std::size_t r = 0; r < kh; ++r)
    for (std::size_t s = 0; s < kw; ++s)
      for (std::size_t oo = 0; oo < o; ++oo)
        for (std::size_t cc = 0; cc < c; ++cc, ++i) {
          if (!std::isfinite(w[i])) throw invalid_input("pack_filter: non-finite weight");
          if (w[i] >= T{0}) out.set(r, s, oo, cc, true);
        }
  return out;
}

template <std::floating_point T>
BitFilterKKOC pack_filter(const std::vector<T>& w, std::size_t kh, std::size_t kw,
                          std::size_t o, std::size_t c, bool tiled = false,
                          FsbGeometry geo = {}) {
  return pack_filter(std::span<const T>(w), kh, kw, o, c, tiled, geo);
}

/// Re-tiles activations; logical content is unchanged.
inline BitTensorHWNC convert_activations(const BitTensorHWNC& t, bool tiled,
                                         FsbGeometry geo = {}) {
  BitTensorHWNC out(t.height, t.width, t.batch, t.channels, tiled, geo);
  for (std::size_t h = 0; h < t.height; ++h)
    for (std::size_t w = 0; w < t.width; ++w)
      for (std::size_t n = 0; n < t.batch; ++n)
        for (std::size_t c = 0; c < t.channels; ++c)
          if (t.get(h, w, n, c)) out.set(h, w, n, c, true);
  return out;
}

inline BitFilterKKOC convert_filter(const BitFilterKKOC& f, bool tiled,
                                    FsbGeometry geo = {}) {
  BitFilterKKOC out(f.kh, f.kw, f.out_channels, f.in_channels, tiled, geo);
  for (std::size_t r = 0; r < f.kh; ++r)
    for (std::size_t s = 0; s < f.kw; ++s)
      for (std::size_t o = 0; o < f.out_channels; ++o)
        for (std::size_t c = 0; c < f.in_channels; ++c)
          if (f.get(r, s, o, c)) out.set(r, s, o, c, true);
  return out;
}

/// Rows n, feature order (h*W + w)*C + c. Used at the conv-to-fc boundary.
inline BitMatrix flatten_to_matrix(const BitTensorHWNC& t, Layout layout,
                                   FsbGeometry geo = {}) {
  const std::size_t features = t.height * t.width * t.channels;
  BitMatrix out(t.batch, features, layout, geo);
  for (std::size_t n = 0; n < t.batch; ++n)
    for (std::size_t h = 0; h < t.height; ++h)
      for (std::size_t w = 0; w < t.width; ++w)
        for (std::size_t c = 0; c < t.channels; ++c)
          if (t.get(h, w, n, c))
            out.set(n, (h * t.width + w) * t.channels + c, true);
  return out;
}

/// Conv window placement: P = (H + 2*pad - KH)/stride + 1, floor division.
struct Conv2dGeometry {
  std::size_t kh = 1, kw = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  void validate() const {
    if (kh == 0 || kw == 0 || stride == 0)
      throw invalid_input("Conv2dGeometry: zero kernel or stride");
  }

  std::size_t out_h(std::size_t h) const {
    if (h + 2 * pad < kh) throw unsupported_shape("conv: input shorter than kernel");
    return (h + 2 * pad - kh) / stride + 1;
  }
  std::size_t out_w(std::size_t w) const {
    if (w + 2 * pad < kw) throw unsupported_shape("conv: input narrower than kernel");
    return (w + 2 * pad - kw) / stride + 1;
  }
};

}  // namespace btnn
