#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "btnn/bit_matrix.hpp"
#include "btnn/common.hpp"
#include "btnn/io.hpp"
#include "btnn/layer_math.hpp"
#include "btnn/model.hpp"
#include "btnn/tensors.hpp"

namespace btnn {

/// Float-weight record for one layer. Conv weights are (r, s, o, c) ordered,
/// fc weights are one row per output unit. Pool layers keep both empty.
struct LayerFloatWeights {
  std::vector<float> weights;
  BnParams bn;
  bool has_bn = false;
};

struct FloatWeights {
  std::vector<LayerFloatWeights> layers;
};

/// Deterministic random weights for a model. Bn means scale with the fan-in
/// so the folded thresholds land inside the value distribution.
inline FloatWeights random_weights(const ModelSpec& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> wd(0.0f, 1.0f);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> vard(0.25, 2.0);
  FloatWeights fw;
  fw.layers.resize(m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    LayerFloatWeights& lw = fw.layers[i];
    std::size_t bn_ch = 0, fan_in = 0;
    switch (l.kind) {
      case LayerKind::FirstConvBWN:
      case LayerKind::BitConv:
        lw.weights.resize(l.kh * l.kw * l.out_channels * l.in_channels);
        bn_ch = l.out_channels;
        fan_in = l.kh * l.kw * l.in_channels;
        break;
      case LayerKind::BitFc:
      case LayerKind::LastFc:
        lw.weights.resize(l.units * l.in_channels);
        bn_ch = l.units;
        fan_in = l.in_channels;
        break;
      case LayerKind::OrPool:
        continue;
    }
    for (auto& v : lw.weights) v = wd(rng);
    lw.has_bn = true;
    lw.bn.eps = m.epsilon;
    const double spread = std::sqrt(static_cast<double>(fan_in)) * 0.5;
    for (std::size_t ch = 0; ch < bn_ch; ++ch) {
      lw.bn.gamma.push_back(nd(rng));
      lw.bn.beta.push_back(nd(rng));
      lw.bn.mean.push_back(nd(rng) * spread);
      lw.bn.var.push_back(vard(rng));
    }
  }
  return fw;
}

namespace detail {

inline void check_float_layer(const ModelSpec& m, std::size_t i, const LayerFloatWeights& lw) {
  const LayerSpec& l = m.layers[i];
  std::size_t want_w = 0, want_bn = 0;
  switch (l.kind) {
    case LayerKind::FirstConvBWN:
    case LayerKind::BitConv:
      want_w = l.kh * l.kw * l.out_channels * l.in_channels;
      want_bn = l.out_channels;
      break;
    case LayerKind::BitFc:
    case LayerKind::LastFc:
      want_w = l.units * l.in_channels;
      want_bn = l.units;
      break;
    case LayerKind::OrPool:
      if (!lw.weights.empty() || lw.has_bn)
        throw validation_error(layer_label(m, i) + ": pool record must be empty");
      return;
  }
  if (lw.weights.size() != want_w)
    throw validation_error(layer_label(m, i) + ": expected " + std::to_string(want_w) +
                           " weights, got " + std::to_string(lw.weights.size()));
  if (!lw.has_bn || lw.bn.channels() != want_bn)
    throw validation_error(layer_label(m, i) + ": expected bn over " +
                           std::to_string(want_bn) + " channels");
}

}  // namespace detail

/// Float-weight container: magic BTFW, u32 version, u32 record count, one
/// record per model layer in order. Record: u8 kind, u32 dims (conv
/// kh,kw,o,c; fc in,out; pool window,stride), u64 float count, f32 weights,
/// u32 bn channels, then f64 gamma/beta/mean/var arrays.
inline void write_float_weights(const std::string& path, const ModelSpec& m,
                                const FloatWeights& fw) {
  if (fw.layers.size() != m.layers.size())
    throw invalid_input("write_float_weights: record count does not match model");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  binio::write_magic(os, "BTFW");
  binio::write_pod<std::uint32_t>(os, 1);
  binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.layers.size()));
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    const LayerFloatWeights& lw = fw.layers[i];
    detail::check_float_layer(m, i, lw);
    binio::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(l.kind));
    switch (l.kind) {
      case LayerKind::FirstConvBWN:
      case LayerKind::BitConv:
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.kh));
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.kw));
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.out_channels));
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.in_channels));
        break;
      case LayerKind::BitFc:
      case LayerKind::LastFc:
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.in_channels));
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.units));
        break;
      case LayerKind::OrPool:
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.window));
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.pool_stride));
        break;
    }
    binio::write_pod<std::uint64_t>(os, lw.weights.size());
    binio::write_span(os, lw.weights.data(), lw.weights.size());
    const std::uint32_t bn_ch = lw.has_bn ? static_cast<std::uint32_t>(lw.bn.channels()) : 0;
    binio::write_pod<std::uint32_t>(os, bn_ch);
    if (bn_ch) {
      binio::write_span(os, lw.bn.gamma.data(), bn_ch);
      binio::write_span(os, lw.bn.beta.data(), bn_ch);
      binio::write_span(os, lw.bn.mean.data(), bn_ch);
      binio::write_span(os, lw.bn.var.data(), bn_ch);
    }
  }
}

inline FloatWeights read_float_weights(const std::string& path, const ModelSpec& m) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  binio::expect_magic(is, "BTFW", "float weight");
  if (binio::read_pod<std::uint32_t>(is) != 1) throw io_error(path + ": unknown version");
  const auto count = binio::read_pod<std::uint32_t>(is);
  if (count != m.layers.size())
    throw validation_error(path + ": has " + std::to_string(count) + " records, model '" +
                           m.name + "' has " + std::to_string(m.layers.size()) + " layers");
  FloatWeights fw;
  fw.layers.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const LayerSpec& l = m.layers[i];
    const auto kind = binio::read_pod<std::uint8_t>(is);
    if (kind != static_cast<std::uint8_t>(l.kind))
      throw validation_error(layer_label(m, i) + ": file record kind " +
                             std::to_string(kind) + " does not match model");
    std::uint32_t d[4] = {0, 0, 0, 0};
    std::size_t nd = 0;
    switch (l.kind) {
      case LayerKind::FirstConvBWN:
      case LayerKind::BitConv: nd = 4; break;
      default: nd = 2; break;
    }
    for (std::size_t k = 0; k < nd; ++k) d[k] = binio::read_pod<std::uint32_t>(is);
    bool dims_ok = true;
    switch (l.kind) {
      case LayerKind::FirstConvBWN:
      case LayerKind::BitConv:
        dims_ok = d[0] == l.kh && d[1] == l.kw && d[2] == l.out_channels && d[3] == l.in_channels;
        break;
      case LayerKind::BitFc:
      case LayerKind::LastFc:
        dims_ok = d[0] == l.in_channels && d[1] == l.units;
        break;
      case LayerKind::OrPool:
        dims_ok = d[0] == l.window && d[1] == l.pool_stride;
        break;
    }
    if (!dims_ok) throw validation_error(layer_label(m, i) + ": file dims do not match model");
    const auto wcount = binio::read_pod<std::uint64_t>(is);
    LayerFloatWeights& lw = fw.layers[i];
    lw.weights = binio::read_vec<float>(is, wcount);
    const auto bn_ch = binio::read_pod<std::uint32_t>(is);
    if (bn_ch) {
      lw.has_bn = true;
      lw.bn.gamma = binio::read_vec<double>(is, bn_ch);
      lw.bn.beta = binio::read_vec<double>(is, bn_ch);
      lw.bn.mean = binio::read_vec<double>(is, bn_ch);
      lw.bn.var = binio::read_vec<double>(is, bn_ch);
      lw.bn.eps = m.epsilon;
    }
    detail::check_float_layer(m, i, lw);
  }
  return fw;
}

/// Runtime weights for one layer, in the run layout.
struct LayerWeights {
  LayerKind kind = LayerKind::OrPool;
  BitFilterKKOC filter;         // conv kinds
  std::vector<float> conv_pm1;  // first conv only, (o, r, s, c) unpacked
  BitMatrix fc;                 // fc kinds: in x out, column per output
  std::vector<Threshold> thresholds;
  BnParams bn;
  bool has_bn = false;
};

struct WeightStore {
  bool tiled = false;
  FsbGeometry geo{};
  std::vector<LayerWeights> layers;
};

namespace detail {

inline std::vector<float> unpack_first_conv(const BitFilterKKOC& f) {
  std::vector<float> pm1(f.kh * f.kw * f.out_channels * f.in_channels);
  std::size_t i = 0;
  for (std::size_t o = 0; o < f.out_channels; ++o)
    for (std::size_t r = 0; r < f.kh; ++r)
      for (std::size_t s = 0; s < f.kw; ++s)
        for (std::size_t c = 0; c < f.in_channels; ++c, ++i)
          pm1[i] = f.get(r, s, o, c) ? 1.0f : -1.0f;
  return pm1;
}

inline BitMatrix pack_fc(const std::vector<float>& w, std::size_t in, std::size_t out,
                         bool tiled, FsbGeometry geo) {
  BitMatrix m(in, out, tiled ? Layout::FsbCol : Layout::ColPacked, geo);
  for (std::size_t j = 0; j < out; ++j)
    for (std::size_t d = 0; d < in; ++d)
      if (w[j * in + d] >= 0.0f) m.set(d, j, true);
  return m;
}

}  // namespace detail

/// Binarizes float weights into the run layout and folds bn+sign into
/// per-channel thresholds wherever the layer allows it.
inline WeightStore build_weights(const ModelSpec& m, const FloatWeights& fw, bool tiled,
                                 FsbGeometry geo = {}) {
  if (fw.layers.size() != m.layers.size())
    throw invalid_input("build_weights: record count does not match model");
  WeightStore ws;
  ws.tiled = tiled;
  ws.geo = geo;
  ws.layers.resize(m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    const LayerFloatWeights& lw = fw.layers[i];
    detail::check_float_layer(m, i, lw);
    LayerWeights& out = ws.layers[i];
    out.kind = l.kind;
    switch (l.kind) {
      case LayerKind::OrPool:
        break;
      case LayerKind::FirstConvBWN:
      case LayerKind::BitConv:
        out.filter = pack_filter(lw.weights, l.kh, l.kw, l.out_channels, l.in_channels,
                                 tiled, geo);
        if (l.kind == LayerKind::FirstConvBWN)
          out.conv_pm1 = detail::unpack_first_conv(out.filter);
        break;
      case LayerKind::BitFc:
      case LayerKind::LastFc:
        out.fc = detail::pack_fc(lw.weights, l.in_channels, l.units, tiled, geo);
        break;
    }
    if (l.kind == LayerKind::OrPool) continue;
    BnParams bn = lw.bn;
    bn.eps = m.epsilon;
    bn.validate();
    if (needs_bn_route(l)) {
      out.bn = std::move(bn);
      out.has_bn = true;
    } else {
      out.thresholds = fold_bn_sign(bn);
    }
  }
  return ws;
}

/// Bit-weight file: magic BTNN, u32 version, u32 layer count. Per layer:
/// u8 kind, u32 dims (as in the float container), u8 layout tag (0 plain,
/// 1 tiled 8x128), u64 word count, raw u64 words, u32 threshold count, f64
/// taus, u8 direction tags, then bn quadruples when the layer keeps bn
/// (first/last always; conv/fc exactly when no thresholds; pool never).
inline void save_weights(const std::string& path, const ModelSpec& m, const WeightStore& ws) {
  if (ws.layers.size() != m.layers.size())
    throw invalid_input("save_weights: layer count does not match model");
  if (ws.tiled && (ws.geo.bh != 8 || ws.geo.bw != 128))
    throw unsupported_shape("save_weights: files store the default 8x128 tile shape only");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  binio::write_magic(os, "BTNN");
  binio::write_pod<std::uint32_t>(os, 1);
  binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ws.layers.size()));
  for (std::size_t i = 0; i < ws.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    const LayerWeights& lw = ws.layers[i];
    binio::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(l.kind));
    const BitBuffer* bits = nullptr;
    switch (l.kind) {
      case LayerKind::FirstConvBWN:
      case LayerKind::BitConv:
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.kh));
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.kw));
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.out_channels));
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.in_channels));
        bits = &lw.filter.bits;
        break;
      case LayerKind::BitFc:
      case LayerKind::LastFc:
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.in_channels));
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.units));
        bits = &lw.fc.bits();
        break;
      case LayerKind::OrPool:
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.window));
        binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(l.pool_stride));
        break;
    }
    binio::write_pod<std::uint8_t>(os, ws.tiled ? 1 : 0);
    const std::size_t words = bits ? bits->n_words() : 0;
    binio::write_pod<std::uint64_t>(os, words);
    if (bits) binio::write_span(os, bits->data(), words);
    binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(lw.thresholds.size()));
    for (const Threshold& t : lw.thresholds) binio::write_pod<double>(os, t.tau);
    for (const Threshold& t : lw.thresholds)
      binio::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(t.kind));
    if (lw.has_bn) {
      const std::size_t ch = lw.bn.channels();
      binio::write_span(os, lw.bn.gamma.data(), ch);
      binio::write_span(os, lw.bn.beta.data(), ch);
      binio::write_span(os, lw.bn.mean.data(), ch);
      binio::write_span(os, lw.bn.var.data(), ch);
    }
  }
}

inline WeightStore load_weights(const std::string& path, const ModelSpec& m, bool tiled,
                                FsbGeometry geo = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  binio::expect_magic(is, "BTNN", "bit weight");
  if (binio::read_pod<std::uint32_t>(is) != 1) throw io_error(path + ": unknown version");
  const auto count = binio::read_pod<std::uint32_t>(is);
  if (count != m.layers.size())
    throw validation_error(path + ": has " + std::to_string(count) + " layers, model '" +
                           m.name + "' has " + std::to_string(m.layers.size()));
  WeightStore ws;
  ws.tiled = tiled;
  ws.geo = geo;
  ws.layers.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const LayerSpec& l = m.layers[i];
    LayerWeights& lw = ws.layers[i];
    lw.kind = l.kind;
    const auto kind = binio::read_pod<std::uint8_t>(is);
    if (kind != static_cast<std::uint8_t>(l.kind))
      throw validation_error(layer_label(m, i) + ": file record kind " +
                             std::to_string(kind) + " does not match model");
    const bool is_conv =
        l.kind == LayerKind::FirstConvBWN || l.kind == LayerKind::BitConv;
    const bool is_fc = l.kind == LayerKind::BitFc || l.kind == LayerKind::LastFc;
    std::uint32_t d[4] = {0, 0, 0, 0};
    const std::size_t nd = is_conv ? 4 : 2;
    for (std::size_t k = 0; k < nd; ++k) d[k] = binio::read_pod<std::uint32_t>(is);
    bool dims_ok = true;
    if (is_conv)
      dims_ok = d[0] == l.kh && d[1] == l.kw && d[2] == l.out_channels && d[3] == l.in_channels;
    else if (is_fc)
      dims_ok = d[0] == l.in_channels && d[1] == l.units;
    else
      dims_ok = d[0] == l.window && d[1] == l.pool_stride;
    if (!dims_ok) throw validation_error(layer_label(m, i) + ": file dims do not match model");
    const auto stored_tiled = binio::read_pod<std::uint8_t>(is);
    if (stored_tiled > 1) throw io_error(path + ": unknown layout tag");
    const auto words = binio::read_pod<std::uint64_t>(is);
    if (is_conv) {
      BitFilterKKOC f(l.kh, l.kw, l.out_channels, l.in_channels, stored_tiled != 0);
      if (words != f.bits.n_words())
        throw validation_error(layer_label(m, i) + ": unexpected word count");
      binio::read_raw(is, f.bits.data(), words * sizeof(std::uint64_t));
      if (f.tiled != tiled || (tiled && (geo.bh != 8 || geo.bw != 128)))
        f = convert_filter(f, tiled, geo);
      lw.filter = std::move(f);
      if (l.kind == LayerKind::FirstConvBWN)
        lw.conv_pm1 = detail::unpack_first_conv(lw.filter);
    } else if (is_fc) {
      BitMatrix fc(l.in_channels, l.units,
                   stored_tiled ? Layout::FsbCol : Layout::ColPacked);
      if (words != fc.bits().n_words())
        throw validation_error(layer_label(m, i) + ": unexpected word count");
      binio::read_raw(is, fc.bits().data(), words * sizeof(std::uint64_t));
      const Layout want = tiled ? Layout::FsbCol : Layout::ColPacked;
      if (fc.layout() != want || (tiled && (geo.bh != 8 || geo.bw != 128))) {
        BitMatrix packed = fc.layout() == Layout::ColPacked ? std::move(fc) : from_fsb(fc);
        fc = tiled ? to_fsb(packed, geo) : std::move(packed);
      }
      lw.fc = std::move(fc);
    } else if (words != 0) {
      throw validation_error(layer_label(m, i) + ": pool layer carries weights");
    }
    const auto thr_count = binio::read_pod<std::uint32_t>(is);
    const std::size_t out_ch = is_conv ? l.out_channels : (is_fc ? l.units : 0);
    const bool want_thresholds = !needs_bn_route(l) && l.kind != LayerKind::OrPool;
    if (want_thresholds != (thr_count > 0) || (thr_count > 0 && thr_count != out_ch))
      throw validation_error(layer_label(m, i) + ": threshold count does not match model");
    if (thr_count) {
      lw.thresholds.resize(thr_count);
      for (auto& t : lw.thresholds) t.tau = binio::read_pod<double>(is);
      for (auto& t : lw.thresholds) {
        const auto dir = binio::read_pod<std::uint8_t>(is);
        if (dir > 3) throw io_error(path + ": unknown threshold direction");
        t.kind = static_cast<ThresholdKind>(dir);
      }
    }
    if (needs_bn_route(l)) {
      lw.has_bn = true;
      lw.bn.gamma = binio::read_vec<double>(is, out_ch);
      lw.bn.beta = binio::read_vec<double>(is, out_ch);
      lw.bn.mean = binio::read_vec<double>(is, out_ch);
      lw.bn.var = binio::read_vec<double>(is, out_ch);
      lw.bn.eps = m.epsilon;
      lw.bn.validate();
    }
  }
  return ws;
}

}  // namespace btnn
