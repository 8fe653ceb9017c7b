#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "btnn/common.hpp"
#include "btnn/layer_math.hpp"
#include "btnn/tensors.hpp"

namespace btnn {

namespace detail {

// Accumulates xor popcounts of one activation site against one filter tap
// plane into acc[o * N + n]. Plain planes: rows packed over channels.
inline void conv_acc_plain(const std::uint64_t* act, const std::uint64_t* fil,
                           std::size_t cw, std::size_t n, std::size_t o,
                           std::int32_t* acc) {
  for (std::size_t oo = 0; oo < o; ++oo) {
    const std::uint64_t* wrow = fil + oo * cw;
    std::int32_t* arow = acc + oo * n;
    for (std::size_t nn = 0; nn < n; ++nn) {
      const std::uint64_t* xrow = act + nn * cw;
      std::int32_t s = 0;
      for (std::size_t w = 0; w < cw; ++w)
        s += std::popcount(xrow[w] ^ wrow[w]);
      arow[nn] += s;
    }
  }
}

// Tiled planes: activation tiles cover bh images x bw channels, filter tiles
// bh outputs x bw channels; both stride unit along the channel tiles.
inline void conv_acc_tiled(const std::uint64_t* act, const std::uint64_t* fil,
                           const FsbGeometry& g, std::size_t n, std::size_t o,
                           std::size_t c_pad, std::int32_t* acc) {
  const std::size_t seg = g.bw / 64;
  const std::size_t tile_words = g.tile_bits() / 64;
  const std::size_t kb_count = c_pad / g.bw;
  const std::size_t n_tiles = ceil_div(n, g.bh);
  const std::size_t o_tiles = ceil_div(o, g.bh);
  for (std::size_t tc = 0; tc < o_tiles; ++tc) {
    const std::size_t o0 = tc * g.bh;
    const std::size_t o1 = std::min(o, o0 + g.bh);
    const std::uint64_t* fb = fil + tc * kb_count * tile_words;
    for (std::size_t tr = 0; tr < n_tiles; ++tr) {
      const std::size_t n0 = tr * g.bh;
      const std::size_t n1 = std::min(n, n0 + g.bh);
      const std::uint64_t* ab = act + tr * kb_count * tile_words;
      for (std::size_t kb = 0; kb < kb_count; ++kb) {
        const std::uint64_t* ta = ab + kb * tile_words;
        const std::uint64_t* tf = fb + kb * tile_words;
        for (std::size_t rr = 0; rr < n1 - n0; ++rr) {
          const std::uint64_t* xrow = ta + rr * seg;
          for (std::size_t cc = 0; cc < o1 - o0; ++cc) {
            const std::uint64_t* wrow = tf + cc * seg;
            std::int32_t s = 0;
            for (std::size_t w = 0; w < seg; ++w)
              s += std::popcount(xrow[w] ^ wrow[w]);
            acc[(o0 + cc) * n + (n0 + rr)] += s;
          }
        }
      }
    }
  }
}

// Drives emit(p, q, n, o, value) over every output element. Zero padding in
// +1/-1 arithmetic: each out-of-frame tap is counted once in exclude, and
// value = C*KH*KW - exclude*C - 2*acc with C the logical channel count (pad
// bits are zero on both operands, so they add nothing to acc).
template <class Emit>
void bconv_sites(const BitTensorHWNC& in, const BitFilterKKOC& filt,
                 const Conv2dGeometry& geo, int threads, Emit&& emit) {
  geo.validate();
  if (geo.kh != filt.kh || geo.kw != filt.kw)
    throw invalid_input("bconv: geometry kernel does not match filter");
  if (in.channels != filt.in_channels)
    throw invalid_input("bconv: channel counts differ");
  if (in.tiled != filt.tiled)
    throw invalid_input("bconv: operand layouts differ");
  if (in.tiled) {
    if (in.geo.bh != filt.geo.bh || in.geo.bw != filt.geo.bw)
      throw unsupported_shape("bconv: operand tile shapes differ");
    if (in.geo.bw % 64 != 0)
      throw unsupported_shape("bconv: tile width must be a multiple of 64");
  }
  const std::size_t p_dim = geo.out_h(in.height);
  const std::size_t q_dim = geo.out_w(in.width);
  const std::size_t n = in.batch;
  const std::size_t o = filt.out_channels;
  const auto c = static_cast<std::int32_t>(in.channels);
  const std::int32_t full = c * static_cast<std::int32_t>(geo.kh * geo.kw);
  const std::size_t cw = in.c_pad / 64;
  const auto h_lim = static_cast<std::int64_t>(in.height);
  const auto w_lim = static_cast<std::int64_t>(in.width);
  parallel_chunks(p_dim * q_dim, threads, [&](std::size_t s0, std::size_t s1) {
    std::vector<std::int32_t> acc(o * n);
    for (std::size_t site = s0; site < s1; ++site) {
      const std::size_t p = site / q_dim;
      const std::size_t q = site % q_dim;
      std::fill(acc.begin(), acc.end(), 0);
      std::int32_t exclude = 0;
      for (std::size_t r = 0; r < geo.kh; ++r) {
        for (std::size_t s = 0; s < geo.kw; ++s) {
          const auto hh = static_cast<std::int64_t>(p * geo.stride + r) -
                          static_cast<std::int64_t>(geo.pad);
          const auto ww = static_cast<std::int64_t>(q * geo.stride + s) -
                          static_cast<std::int64_t>(geo.pad);
          if (hh < 0 || ww < 0 || hh >= h_lim || ww >= w_lim) {
            ++exclude;
            continue;
          }
          const std::uint64_t* act =
              in.site_words(static_cast<std::size_t>(hh), static_cast<std::size_t>(ww));
          const std::uint64_t* fil = filt.plane_words_ptr(r, s);
          if (in.tiled)
            conv_acc_tiled(act, fil, in.geo, n, o, in.c_pad, acc.data());
          else
            conv_acc_plain(act, fil, cw, n, o, acc.data());
        }
      }
      const std::int32_t base = full - exclude * c;
      for (std::size_t nn = 0; nn < n; ++nn)
        for (std::size_t oo = 0; oo < o; ++oo)
          emit(p, q, nn, oo, base - 2 * acc[oo * n + nn]);
    }
  });
}

}  // namespace detail

/// +1/-1 convolution with zero padding, integer outputs.
inline IntTensorPQNO bconv_pm1(const BitTensorHWNC& in, const BitFilterKKOC& filt,
                               const Conv2dGeometry& geo, int threads = 0) {
  IntTensorPQNO out(geo.out_h(in.height), geo.out_w(in.width), in.batch,
                    filt.out_channels);
  detail::bconv_sites(in, filt, geo, resolve_threads(threads),
                      [&](std::size_t p, std::size_t q, std::size_t n, std::size_t o,
                          std::int32_t v) { out.at(p, q, n, o) = v; });
  return out;
}

/// Post-conv behavior for a fused layer. Exactly one of thresholds (folded
/// bn+sign, one per output channel) or bn (explicit batch norm in doubles)
/// must be set. Residual ports need the bn route: the incoming residual is
/// added after bn, the tap captures the value feeding sign.
struct ConvFused {
  std::span<const Threshold> thresholds{};
  const BnParams* bn = nullptr;
  const RealTensorPQNO* residual_in = nullptr;
  RealTensorPQNO* residual_out = nullptr;
  int threads = 0;
};

inline BitTensorHWNC bconv_fused(const BitTensorHWNC& in, const BitFilterKKOC& filt,
                                 const Conv2dGeometry& geo, const ConvFused& f) {
  const std::size_t o = filt.out_channels;
  const bool thresholded = !f.thresholds.empty();
  if (thresholded == (f.bn != nullptr))
    throw invalid_input("bconv_fused: need exactly one of thresholds or bn");
  if (thresholded && f.thresholds.size() != o)
    throw invalid_input("bconv_fused: need one threshold per output channel");
  if (f.bn && f.bn->channels() != o)
    throw invalid_input("bconv_fused: bn channel count does not match filter");
  if ((f.residual_in || f.residual_out) && !f.bn)
    throw invalid_input("bconv_fused: residual ports require the bn route");
  const std::size_t p_dim = geo.out_h(in.height);
  const std::size_t q_dim = geo.out_w(in.width);
  auto check_residual = [&](const RealTensorPQNO& t, const char* what) {
    if (t.p != p_dim || t.q != q_dim || t.batch != in.batch || t.channels != o)
      throw invalid_input(std::string("bconv_fused: ") + what + " dims do not match output");
  };
  if (f.residual_in) check_residual(*f.residual_in, "residual_in");
  if (f.residual_out) *f.residual_out = RealTensorPQNO(p_dim, q_dim, in.batch, o);
  BitTensorHWNC out(p_dim, q_dim, in.batch, o, in.tiled, in.geo);
  detail::bconv_sites(
      in, filt, geo, resolve_threads(f.threads),
      [&](std::size_t p, std::size_t q, std::size_t n, std::size_t oo, std::int32_t v) {
        if (thresholded) {
          if (f.thresholds[oo].fire(v)) out.set(p, q, n, oo, true);
          return;
        }
        double y = f.bn->apply(oo, v);
        if (f.residual_in) y += f.residual_in->at(p, q, n, oo);
        if (f.residual_out) f.residual_out->at(p, q, n, oo) = y;
        if (y >= 0.0) out.set(p, q, n, oo, true);
      });
  return out;
}

/// First-layer convolution: real inputs against +1/-1 weights, accumulated
/// in doubles in fixed (r, s, c) order. weights_pm1 is (o, r, s, c) ordered.
inline RealTensorPQNO first_conv_bwn(const RealTensorNHWC& x,
                                     std::span<const float> weights_pm1,
                                     std::size_t kh, std::size_t kw, std::size_t o,
                                     const Conv2dGeometry& geo, int threads = 0) {
  geo.validate();
  if (geo.kh != kh || geo.kw != kw)
    throw invalid_input("first_conv_bwn: geometry kernel does not match filter");
  if (weights_pm1.size() != kh * kw * o * x.channels)
    throw invalid_input("first_conv_bwn: weight count does not match dimensions");
  const std::size_t p_dim = geo.out_h(x.height);
  const std::size_t q_dim = geo.out_w(x.width);
  const std::size_t c = x.channels;
  RealTensorPQNO out(p_dim, q_dim, x.batch, o);
  const auto h_lim = static_cast<std::int64_t>(x.height);
  const auto w_lim = static_cast<std::int64_t>(x.width);
  parallel_chunks(p_dim * q_dim, resolve_threads(threads), [&](std::size_t s0, std::size_t s1) {
    for (std::size_t site = s0; site < s1; ++site) {
      const std::size_t p = site / q_dim;
      const std::size_t q = site % q_dim;
      for (std::size_t n = 0; n < x.batch; ++n) {
        for (std::size_t oo = 0; oo < o; ++oo) {
          const float* wbase = weights_pm1.data() + oo * kh * kw * c;
          double acc = 0.0;
          for (std::size_t r = 0; r < kh; ++r) {
            for (std::size_t s = 0; s < kw; ++s) {
              const auto hh = static_cast<std::int64_t>(p * geo.stride + r) -
                              static_cast<std::int64_t>(geo.pad);
              const auto ww = static_cast<std::int64_t>(q * geo.stride + s) -
                              static_cast<std::int64_t>(geo.pad);
              if (hh < 0 || ww < 0 || hh >= h_lim || ww >= w_lim) continue;
              const float* xr = x.v.data() +
                                (((n * x.height + static_cast<std::size_t>(hh)) * x.width +
                                  static_cast<std::size_t>(ww)) *
                                 c);
              const float* wr = wbase + (r * kw + s) * c;
              for (std::size_t cc = 0; cc < c; ++cc)
                acc += static_cast<double>(xr[cc]) * static_cast<double>(wr[cc]);
            }
          }
          out.at(p, q, n, oo) = acc;
        }
      }
    }
  });
  return out;
}

/// Max pooling on +1/-1 encodings reduces to OR over the window, done a
/// whole site plane at a time so it works for either layout.
inline BitTensorHWNC or_pool(const BitTensorHWNC& in, std::size_t window,
                             std::size_t stride, int threads = 0) {
  if (window == 0 || stride == 0) throw invalid_input("or_pool: zero window or stride");
  if (in.height < window || in.width < window)
    throw unsupported_shape("or_pool: input smaller than window");
  if ((in.height - window) % stride != 0 || (in.width - window) % stride != 0)
    throw unsupported_shape("or_pool: window placement does not cover the input exactly");
  const std::size_t oh = (in.height - window) / stride + 1;
  const std::size_t ow = (in.width - window) / stride + 1;
  BitTensorHWNC out(oh, ow, in.batch, in.channels, in.tiled, in.geo);
  const std::size_t pw = in.plane_words();
  parallel_chunks(oh * ow, resolve_threads(threads), [&](std::size_t s0, std::size_t s1) {
    for (std::size_t site = s0; site < s1; ++site) {
      const std::size_t p = site / ow;
      const std::size_t q = site % ow;
      std::uint64_t* dst = out.bits.data() + site * pw;
      for (std::size_t r = 0; r < window; ++r) {
        for (std::size_t s = 0; s < window; ++s) {
          const std::uint64_t* src = in.site_words(p * stride + r, q * stride + s);
          for (std::size_t w = 0; w < pw; ++w) dst[w] |= src[w];
        }
      }
    }
  });
  return out;
}

}  // namespace btnn
