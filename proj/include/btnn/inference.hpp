#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "btnn/bconv.hpp"
#include "btnn/bit_matrix.hpp"
#include "btnn/bmm.hpp"
#include "btnn/common.hpp"
#include "btnn/model.hpp"
#include "btnn/tensors.hpp"
#include "btnn/weights.hpp"

namespace btnn {

struct RunOptions {
  int threads = 0;
  bool breakdown = false;
  BmmVariant fc_variant = BmmVariant::Blocked;  // plain layout only; tiled uses Fsb
};

struct LayerTiming {
  std::string label;
  double ms = 0.0;
};

struct RunResult {
  std::size_t batch = 0, classes = 0;
  std::vector<double> logits;  // batch x classes
  std::vector<int> labels;     // argmax, first index on ties
  std::vector<LayerTiming> timings;
};

namespace detail {

/// Adapts a tapped tensor to the receiving layer's shape. A halved grid is
/// averaged over 2x2 windows; missing channels stay zero. The additions run
/// in a fixed order so every engine configuration rounds identically.
inline RealTensorPQNO adapt_shortcut(const RealTensorPQNO& src, std::size_t p,
                                     std::size_t q, std::size_t channels) {
  RealTensorPQNO out(p, q, src.batch, channels);
  const bool halve = src.p != p;
  for (std::size_t pp = 0; pp < p; ++pp)
    for (std::size_t qq = 0; qq < q; ++qq)
      for (std::size_t n = 0; n < src.batch; ++n)
        for (std::size_t c = 0; c < src.channels; ++c) {
          double v;
          if (halve) {
            v = ((src.at(2 * pp, 2 * qq, n, c) + src.at(2 * pp, 2 * qq + 1, n, c)) +
                 src.at(2 * pp + 1, 2 * qq, n, c)) +
                src.at(2 * pp + 1, 2 * qq + 1, n, c);
            v *= 0.25;
          } else {
            v = src.at(pp, qq, n, c);
          }
          out.at(pp, qq, n, c) = v;
        }
  return out;
}

}  // namespace detail

inline RunResult run_inference(const ModelSpec& m, const WeightStore& ws,
                               const RealTensorNHWC& input, const RunOptions& opt = {}) {
  if (ws.layers.size() != m.layers.size())
    throw invalid_input("run_inference: weight store does not match model");
  if (input.batch == 0) throw invalid_input("run_inference: empty batch");
  if (input.height != m.in_h || input.width != m.in_w || input.channels != m.in_c)
    throw invalid_input("run_inference: input dims do not match model '" + m.name + "'");
  for (float f : input.v)
    if (!std::isfinite(f)) throw invalid_input("run_inference: non-finite input");

  const std::size_t batch = input.batch;
  const bool tiled = ws.tiled;
  const FsbGeometry geo = ws.geo;
  const Layout act_layout = tiled ? Layout::FsbRow : Layout::RowPacked;
  BmmOptions bopt;
  bopt.variant = tiled ? BmmVariant::Fsb : opt.fc_variant;
  bopt.threads = opt.threads;

  RunResult res;
  res.batch = batch;
  res.classes = m.classes;
  res.logits.assign(batch * m.classes, 0.0);

  BitTensorHWNC act;
  BitMatrix fc_act;
  bool in_fc = false;
  std::vector<RealTensorPQNO> taps(m.layers.size());

  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    const LayerWeights& lw = ws.layers[i];
    const auto t0 = clock::now();
    switch (l.kind) {
      case LayerKind::FirstConvBWN: {
        RealTensorPQNO acc = first_conv_bwn(input, lw.conv_pm1, l.kh, l.kw,
                                            l.out_channels, l.conv_geometry(), opt.threads);
        act = BitTensorHWNC(l.out_h, l.out_w, batch, l.out_channels, tiled, geo);
        if (l.residual_out) taps[i] = RealTensorPQNO(l.out_h, l.out_w, batch, l.out_channels);
        const std::size_t q_dim = l.out_w;
        parallel_chunks(l.out_h * l.out_w, resolve_threads(opt.threads),
                        [&](std::size_t s0, std::size_t s1) {
                          for (std::size_t site = s0; site < s1; ++site) {
                            const std::size_t p = site / q_dim, q = site % q_dim;
                            for (std::size_t n = 0; n < batch; ++n)
                              for (std::size_t o = 0; o < l.out_channels; ++o) {
                                const double y = lw.bn.apply(o, acc.at(p, q, n, o));
                                if (l.residual_out) taps[i].at(p, q, n, o) = y;
                                if (y >= 0.0) act.set(p, q, n, o, true);
                              }
                          }
                        });
        break;
      }
      case LayerKind::BitConv: {
        ConvFused f;
        f.threads = opt.threads;
        if (!lw.thresholds.empty()) {
          f.thresholds = lw.thresholds;
        } else {
          f.bn = &lw.bn;
        }
        RealTensorPQNO adapted;
        if (l.residual_in) {
          const RealTensorPQNO& tap = taps[static_cast<std::size_t>(l.shortcut_from)];
          if (tap.p == l.out_h && tap.q == l.out_w && tap.channels == l.out_channels) {
            f.residual_in = &tap;
          } else {
            adapted = detail::adapt_shortcut(tap, l.out_h, l.out_w, l.out_channels);
            f.residual_in = &adapted;
          }
        }
        if (l.residual_out) f.residual_out = &taps[i];
        act = bconv_fused(act, lw.filter, l.conv_geometry(), f);
        break;
      }
      case LayerKind::OrPool:
        act = or_pool(act, l.window, l.pool_stride, opt.threads);
        break;
      case LayerKind::BitFc:
      case LayerKind::LastFc: {
        if (!in_fc) {
          if (i == 0) {
            fc_act = pack_matrix(std::span<const float>(input.v), batch, l.in_channels,
                                 act_layout, geo);
          } else {
            fc_act = flatten_to_matrix(act, act_layout, geo);
            act = BitTensorHWNC();
          }
          in_fc = true;
        }
        if (l.kind == LayerKind::BitFc) {
          fc_act = bmm_pm1_bin(fc_act, lw.fc, bopt, lw.thresholds);
        } else {
          const IntMatrix v = bmm_pm1(fc_act, lw.fc, bopt);
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t j = 0; j < m.classes; ++j)
              res.logits[n * m.classes + j] = lw.bn.apply(j, v.at(n, j));
        }
        break;
      }
    }
    if (opt.breakdown) {
      const auto t1 = clock::now();
      res.timings.push_back(
          {layer_label(m, i),
           std::chrono::duration<double, std::milli>(t1 - t0).count()});
    }
  }

  res.labels.resize(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    const double* row = res.logits.data() + n * m.classes;
    std::size_t best = 0;
    for (std::size_t j = 1; j < m.classes; ++j)
      if (row[j] > row[best]) best = j;
    res.labels[n] = static_cast<int>(best);
  }
  return res;
}

}  // namespace btnn
