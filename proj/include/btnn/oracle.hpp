#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "btnn/common.hpp"
#include "btnn/layer_math.hpp"
#include "btnn/model.hpp"
#include "btnn/tensors.hpp"
#include "btnn/weights.hpp"

// Plain dense float reference implementations. Everything here computes with
// +1/-1 doubles and ordinary loops so the packed kernels have an independent
// answer to match. Sums of +1/-1 terms are exact in doubles, so comparisons
// against the integer kernels are exact too.
namespace btnn::oracle {

template <std::floating_point T>
std::vector<double> binarize_pm1(std::span<const T> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]))
      throw invalid_input("binarize_pm1: non-finite value at index " + std::to_string(i));
    out[i] = x[i] >= T{0} ? 1.0 : -1.0;
  }
  return out;
}

template <std::floating_point T>
std::vector<double> binarize_pm1(const std::vector<T>& x) {
  return binarize_pm1(std::span<const T>(x));
}

/// Row-major (m x n) times row-major (n x k), accumulated in doubles with a
/// fixed i, l, j loop order.
inline std::vector<double> ref_matmul(std::span<const double> a, std::span<const double> b,
                                      std::size_t m, std::size_t n, std::size_t k) {
  if (a.size() != m * n || b.size() != n * k)
    throw invalid_input("ref_matmul: operand sizes do not match dimensions");
  std::vector<double> out(m * k, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < n; ++l) {
      const double av = a[i * n + l];
      const double* brow = b.data() + l * k;
      double* orow = out.data() + i * k;
      for (std::size_t j = 0; j < k; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

/// Binarizes both operands to +1/-1 and multiplies densely.
template <std::floating_point T>
std::vector<double> ref_bmm(std::span<const T> a, std::span<const T> b, std::size_t m,
                            std::size_t n, std::size_t k) {
  const auto ab = binarize_pm1(a);
  const auto bb = binarize_pm1(b);
  return ref_matmul(ab, bb, m, n, k);
}

template <std::floating_point T>
std::vector<double> ref_bmm(const std::vector<T>& a, const std::vector<T>& b,
                            std::size_t m, std::size_t n, std::size_t k) {
  return ref_bmm(std::span<const T>(a), std::span<const T>(b), m, n, k);
}

/// Dense zero-padded convolution. x is NHWC, weights are (r, s, o, c)
/// ordered, output is PQNO. Accumulation runs in (r, s, c) order per output
/// element, in doubles.
inline std::vector<double> ref_conv_zero_pad(std::span<const double> x, std::size_t n,
                                             std::size_t h, std::size_t w, std::size_t c,
                                             std::span<const double> wt, std::size_t o,
                                             std::size_t kh, std::size_t kw,
                                             std::size_t stride, std::size_t pad) {
  if (x.size() != n * h * w * c || wt.size() != kh * kw * o * c)
    throw invalid_input("ref_conv_zero_pad: operand sizes do not match dimensions");
  if (stride == 0 || h + 2 * pad < kh || w + 2 * pad < kw)
    throw invalid_input("ref_conv_zero_pad: bad geometry");
  const std::size_t p_dim = (h + 2 * pad - kh) / stride + 1;
  const std::size_t q_dim = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(p_dim * q_dim * n * o, 0.0);
  for (std::size_t p = 0; p < p_dim; ++p) {
    for (std::size_t q = 0; q < q_dim; ++q) {
      for (std::size_t nn = 0; nn < n; ++nn) {
        for (std::size_t oo = 0; oo < o; ++oo) {
          double acc = 0.0;
          for (std::size_t r = 0; r < kh; ++r) {
            for (std::size_t s = 0; s < kw; ++s) {
              const auto hh = static_cast<std::int64_t>(p * stride + r) -
                              static_cast<std::int64_t>(pad);
              const auto ww = static_cast<std::int64_t>(q * stride + s) -
                              static_cast<std::int64_t>(pad);
              if (hh < 0 || ww < 0 || hh >= static_cast<std::int64_t>(h) ||
                  ww >= static_cast<std::int64_t>(w))
                continue;
              const double* xr =
                  x.data() + ((nn * h + static_cast<std::size_t>(hh)) * w +
                              static_cast<std::size_t>(ww)) *
                                 c;
              const double* wr = wt.data() + ((r * kw + s) * o + oo) * c;
              for (std::size_t cc = 0; cc < c; ++cc) acc += xr[cc] * wr[cc];
            }
          }
          out[((p * q_dim + q) * n + nn) * o + oo] = acc;
        }
      }
    }
  }
  return out;
}

/// Dense max pooling over PQNO values; window placement must tile exactly.
inline std::vector<double> ref_max_pool(std::span<const double> x, std::size_t p,
                                        std::size_t q, std::size_t n, std::size_t o,
                                        std::size_t window, std::size_t stride) {
  if (x.size() != p * q * n * o)
    throw invalid_input("ref_max_pool: size does not match dimensions");
  if (window == 0 || stride == 0 || p < window || q < window ||
      (p - window) % stride != 0 || (q - window) % stride != 0)
    throw invalid_input("ref_max_pool: bad geometry");
  const std::size_t oh = (p - window) / stride + 1;
  const std::size_t ow = (q - window) / stride + 1;
  std::vector<double> out(oh * ow * n * o);
  for (std::size_t pp = 0; pp < oh; ++pp)
    for (std::size_t qq = 0; qq < ow; ++qq)
      for (std::size_t nn = 0; nn < n; ++nn)
        for (std::size_t oo = 0; oo < o; ++oo) {
          double best = -std::numeric_limits<double>::infinity();
          for (std::size_t r = 0; r < window; ++r)
            for (std::size_t s = 0; s < window; ++s)
              best = std::max(best, x[(((pp * stride + r) * q + (qq * stride + s)) * n + nn) * o + oo]);
          out[((pp * ow + qq) * n + nn) * o + oo] = best;
        }
  return out;
}

/// Dense fully connected: x (n rows over d) times weights (k rows over d,
/// one row per output), accumulated over d in order.
inline std::vector<double> ref_fc(std::span<const double> x, std::size_t n, std::size_t d,
                                  std::span<const double> wt, std::size_t k) {
  if (x.size() != n * d || wt.size() != k * d)
    throw invalid_input("ref_fc: operand sizes do not match dimensions");
  std::vector<double> out(n * k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double* xr = x.data() + i * d;
      const double* wr = wt.data() + j * d;
      double acc = 0.0;
      for (std::size_t dd = 0; dd < d; ++dd) acc += xr[dd] * wr[dd];
      out[i * k + j] = acc;
    }
  return out;
}

/// Htanh forward: Clip(x, -1, 1).
inline double ref_htanh(double x) { return std::min(1.0, std::max(-1.0, x)); }

struct RefResult {
  std::size_t batch = 0, classes = 0;
  std::vector<double> logits;  // batch x classes
  std::vector<int> labels;     // argmax, first index on ties
};

/// Dense end-to-end reference for a whole model, run on the float weights.
/// Activations are +1/-1 doubles throughout; convolution and fc sums are
/// exact integers, bn epilogues use the same expression as the engine, and
/// folded layers apply the same thresholds. The engine must match this
/// bit for bit.
inline RefResult ref_pipeline(const ModelSpec& m, const FloatWeights& fw,
                              const RealTensorNHWC& input) {
  if (fw.layers.size() != m.layers.size())
    throw invalid_input("ref_pipeline: weight records do not match model");
  if (input.batch == 0) throw invalid_input("ref_pipeline: empty batch");
  if (input.height != m.in_h || input.width != m.in_w || input.channels != m.in_c)
    throw invalid_input("ref_pipeline: input dims do not match model '" + m.name + "'");
  const std::size_t batch = input.batch;

  std::vector<double> act;  // NHWC +1/-1 during the conv phase
  std::vector<double> fc;   // batch x features +1/-1 during the fc phase
  bool in_fc = false;

  struct Tap {
    std::size_t p = 0, q = 0, ch = 0;
    std::vector<double> v;  // PQNO
  };
  std::vector<Tap> taps(m.layers.size());

  RefResult res;
  res.batch = batch;
  res.classes = m.classes;
  res.logits.assign(batch * m.classes, 0.0);

  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    const LayerFloatWeights& lw = fw.layers[i];
    switch (l.kind) {
      case LayerKind::FirstConvBWN:
      case LayerKind::BitConv: {
        std::vector<double> x;
        if (l.kind == LayerKind::FirstConvBWN)
          x.assign(input.v.begin(), input.v.end());
        else
          x = std::move(act);
        const auto wt = binarize_pm1(lw.weights);
        const auto conv =
            ref_conv_zero_pad(x, batch, l.in_h, l.in_w, l.in_channels, wt,
                              l.out_channels, l.kh, l.kw, l.stride, l.pad);
        const std::size_t oh = l.out_h, ow = l.out_w, oc = l.out_channels;
        act.assign(batch * oh * ow * oc, 0.0);
        BnParams bn = lw.bn;
        bn.eps = m.epsilon;
        const bool folded = !needs_bn_route(l);
        std::vector<Threshold> thr;
        if (folded) thr = fold_bn_sign(bn);
        const Tap* from = l.residual_in ? &taps[static_cast<std::size_t>(l.shortcut_from)]
                                        : nullptr;
        if (l.residual_out) taps[i] = {oh, ow, oc, std::vector<double>(oh * ow * batch * oc)};
        for (std::size_t p = 0; p < oh; ++p)
          for (std::size_t q = 0; q < ow; ++q)
            for (std::size_t n = 0; n < batch; ++n)
              for (std::size_t o = 0; o < oc; ++o) {
                const double v = conv[((p * ow + q) * batch + n) * oc + o];
                bool bit;
                if (folded) {
                  bit = thr[o].fire(v);
                } else {
                  double y = bn.apply(o, v);
                  if (from) {
                    double r;
                    if (from->p == oh) {
                      r = o < from->ch
                              ? from->v[((p * from->q + q) * batch + n) * from->ch + o]
                              : 0.0;
                    } else if (o < from->ch) {
                      const std::size_t fq = from->q, fch = from->ch;
                      const double a =
                          from->v[((2 * p * fq + 2 * q) * batch + n) * fch + o];
                      const double b =
                          from->v[((2 * p * fq + 2 * q + 1) * batch + n) * fch + o];
                      const double cval =
                          from->v[(((2 * p + 1) * fq + 2 * q) * batch + n) * fch + o];
                      const double d =
                          from->v[(((2 * p + 1) * fq + 2 * q + 1) * batch + n) * fch + o];
                      r = ((a + b) + cval) + d;
                      r *= 0.25;
                    } else {
                      r = 0.0;
                    }
                    y += r;
                  }
                  if (l.residual_out) taps[i].v[((p * ow + q) * batch + n) * oc + o] = y;
                  bit = ref_htanh(y) >= 0.0;
                }
                act[((n * oh + p) * ow + q) * oc + o] = bit ? 1.0 : -1.0;
              }
        break;
      }
      case LayerKind::OrPool: {
        const std::size_t oh = l.out_h, ow = l.out_w, oc = l.out_channels;
        std::vector<double> next(batch * oh * ow * oc, -1.0);
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t p = 0; p < oh; ++p)
            for (std::size_t q = 0; q < ow; ++q)
              for (std::size_t c = 0; c < oc; ++c) {
                double best = -1.0;
                for (std::size_t r = 0; r < l.window; ++r)
                  for (std::size_t s = 0; s < l.window; ++s)
                    best = std::max(
                        best, act[((n * l.in_h + p * l.pool_stride + r) * l.in_w +
                                   q * l.pool_stride + s) *
                                      oc +
                                  c]);
                next[((n * oh + p) * ow + q) * oc + c] = best;
              }
        act = std::move(next);
        break;
      }
      case LayerKind::BitFc:
      case LayerKind::LastFc: {
        if (!in_fc) {
          // NHWC is already (h*W + w)*C + c per sample, so the conv
          // activations flatten in place.
          fc = i == 0 ? binarize_pm1(input.v) : std::move(act);
          in_fc = true;
        }
        const auto wt = binarize_pm1(lw.weights);
        const auto v = ref_fc(fc, batch, l.in_channels, wt, l.units);
        BnParams bn = lw.bn;
        bn.eps = m.epsilon;
        if (l.kind == LayerKind::LastFc) {
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t j = 0; j < m.classes; ++j)
              res.logits[n * m.classes + j] = bn.apply(j, v[n * l.units + j]);
        } else {
          const auto thr = fold_bn_sign(bn);
          fc.assign(batch * l.units, 0.0);
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t j = 0; j < l.units; ++j)
              fc[n * l.units + j] = thr[j].fire(v[n * l.units + j]) ? 1.0 : -1.0;
        }
        break;
      }
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

}  // namespace btnn::oracle
