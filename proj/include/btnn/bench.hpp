#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "btnn/bconv.hpp"
#include "btnn/bit_matrix.hpp"
#include "btnn/bmm.hpp"
#include "btnn/common.hpp"
#include "btnn/inference.hpp"
#include "btnn/model.hpp"
#include "btnn/oracle.hpp"
#include "btnn/tensors.hpp"
#include "btnn/weights.hpp"

namespace btnn::bench {

struct BenchRow {
  std::string suite, kernel, variant, layout, shape;
  int threads = 0, reps = 0, warmup = 0;
  double median_ns = 0, mean_ns = 0, min_ns = 0;
  double throughput = 0;
  std::string throughput_unit;
  bool precheck = false;
};

struct BenchConfig {
  std::uint64_t seed = 1;
  int reps = 10;
  int warmup = 3;
  int threads = 0;
  std::size_t bmm_min_n = 128;
  std::size_t bmm_max_n = 4096;  // 16384 works too, at ~3GB of float operands
  std::size_t conv_input = 64;
  std::size_t conv_batch = 16;
  std::size_t conv_kernel = 3;
  std::size_t conv_min_c = 128;
  std::size_t conv_max_c = 2048;
  std::vector<std::size_t> model_batches = {8, 16, 32, 64};
};

struct Timing {
  double median_ns = 0, mean_ns = 0, min_ns = 0;
};

template <class Fn>
Timing time_reps(int reps, int warmup, Fn&& fn) {
  if (reps < 1) throw invalid_input("bench: need at least one repetition");
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> ns(static_cast<std::size_t>(reps));
  for (auto& t : ns) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    t = std::chrono::duration<double, std::nano>(t1 - t0).count();
  }
  std::sort(ns.begin(), ns.end());
  Timing out;
  const std::size_t n = ns.size();
  out.median_ns = n % 2 ? ns[n / 2] : 0.5 * (ns[n / 2 - 1] + ns[n / 2]);
  out.min_ns = ns.front();
  for (double t : ns) out.mean_ns += t;
  out.mean_ns /= static_cast<double>(n);
  return out;
}

namespace detail {

// Shapes in the sweeps are multiples of the pack alignment, so every stored
// word is live and can be drawn straight from the generator.
inline void fill_words(BitBuffer& b, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < b.n_words(); ++i) b.data()[i] = rng();
}

inline BitMatrix random_matrix(std::size_t rows, std::size_t cols, Layout layout,
                               std::mt19937_64& rng) {
  BitMatrix m(rows, cols, layout);
  if (m.padded_rows() != rows || m.padded_cols() != cols)
    throw unsupported_shape("bench: shape would leave pad bits");
  fill_words(m.bits(), rng);
  return m;
}

inline double pm1(bool bit) { return bit ? 1.0 : -1.0; }

// Entry-level f64 reference for one output of a packed matrix product.
inline double ref_entry(const BitMatrix& a, const BitMatrix& b, std::size_t i,
                        std::size_t j) {
  double acc = 0.0;
  for (std::size_t d = 0; d < a.cols(); ++d) acc += pm1(a.get(i, d)) * pm1(b.get(d, j));
  return acc;
}

// Entry-level f64 reference for one conv output; out-of-frame taps add zero.
inline double ref_conv_entry(const BitTensorHWNC& in, const BitFilterKKOC& f,
                             const Conv2dGeometry& g, std::size_t p, std::size_t q,
                             std::size_t n, std::size_t o) {
  double acc = 0.0;
  for (std::size_t r = 0; r < f.kh; ++r)
    for (std::size_t s = 0; s < f.kw; ++s) {
      const auto hh = static_cast<std::int64_t>(p * g.stride + r) -
                      static_cast<std::int64_t>(g.pad);
      const auto ww = static_cast<std::int64_t>(q * g.stride + s) -
                      static_cast<std::int64_t>(g.pad);
      if (hh < 0 || ww < 0 || hh >= static_cast<std::int64_t>(in.height) ||
          ww >= static_cast<std::int64_t>(in.width))
        continue;
      for (std::size_t c = 0; c < f.in_channels; ++c)
        acc += pm1(in.get(static_cast<std::size_t>(hh), static_cast<std::size_t>(ww), n, c)) *
               pm1(f.get(r, s, o, c));
    }
  return acc;
}

inline std::string shape_mnk(std::size_t n) {
  const auto s = std::to_string(n);
  return s + "x" + s + "x" + s;
}

}  // namespace detail

/// General scheme: binarize float operands, multiply, keep integer outputs.
/// Bin scheme: operands arrive packed, outputs are binarized again.
inline std::vector<BenchRow> bench_bmm(const BenchConfig& cfg, bool bin) {
  std::mt19937_64 rng(cfg.seed);
  std::vector<BenchRow> rows;
  for (std::size_t n = cfg.bmm_min_n; n <= cfg.bmm_max_n; n *= 2) {
    std::vector<float> fa, fb;
    BitMatrix a, b, a_fsb, b_fsb;
    if (bin) {
      a = detail::random_matrix(n, n, Layout::RowPacked, rng);
      b = detail::random_matrix(n, n, Layout::ColPacked, rng);
    } else {
      std::normal_distribution<float> dist(0.0f, 1.0f);
      fa.resize(n * n);
      fb.resize(n * n);
      for (auto& v : fa) v = dist(rng);
      for (auto& v : fb) v = dist(rng);
      a = pack_matrix(fa, n, n, Layout::RowPacked);
      b = pack_matrix(fb, n, n, Layout::ColPacked);
    }
    a_fsb = to_fsb(a);
    b_fsb = to_fsb(b);

    struct Variant {
      BmmVariant v;
      const BitMatrix* a;
      const BitMatrix* b;
      const char* layout;
    };
    const Variant variants[] = {{BmmVariant::Naive, &a, &b, "plain"},
                                {BmmVariant::Blocked, &a, &b, "plain"},
                                {BmmVariant::Fsb, &a_fsb, &b_fsb, "fsb"}};
    for (const auto& var : variants) {
      BmmOptions opt;
      opt.variant = var.v;
      opt.threads = cfg.threads;

      // correctness gate on sampled entries before any timing
      std::uniform_int_distribution<std::size_t> idx(0, n - 1);
      const IntMatrix once = bmm_pm1(*var.a, *var.b, opt);
      BitMatrix once_bin;
      if (bin) once_bin = bmm_pm1_bin(*var.a, *var.b, opt);
      for (int k = 0; k < 32; ++k) {
        const std::size_t i = idx(rng), j = idx(rng);
        const double ref = detail::ref_entry(a, b, i, j);
        if (static_cast<double>(once.at(i, j)) != ref)
          throw validation_error("bench: bmm precheck failed at n=" + std::to_string(n));
        if (bin && once_bin.get(i, j) != (ref >= 0.0))
          throw validation_error("bench: bmm-bin precheck failed at n=" + std::to_string(n));
      }

      BenchRow row;
      row.suite = bin ? "bmm-bin" : "bmm";
      row.kernel = bin ? "bmm_pm1_bin" : "bmm_pm1";
      row.variant = variant_name(var.v);
      row.layout = var.layout;
      row.shape = detail::shape_mnk(n);
      row.threads = resolve_threads(cfg.threads);
      row.reps = cfg.reps;
      row.warmup = cfg.warmup;
      row.precheck = true;
      Timing t;
      if (bin) {
        t = time_reps(cfg.reps, cfg.warmup, [&] {
          const BitMatrix out = bmm_pm1_bin(*var.a, *var.b, opt);
          (void)out;
        });
      } else {
        const Layout la = var.v == BmmVariant::Fsb ? Layout::FsbRow : Layout::RowPacked;
        const Layout lb = var.v == BmmVariant::Fsb ? Layout::FsbCol : Layout::ColPacked;
        t = time_reps(cfg.reps, cfg.warmup, [&] {
          const BitMatrix ta = pack_matrix(fa, n, n, la);
          const BitMatrix tb = pack_matrix(fb, n, n, lb);
          const IntMatrix out = bmm_pm1(ta, tb, opt);
          (void)out;
        });
      }
      row.median_ns = t.median_ns;
      row.mean_ns = t.mean_ns;
      row.min_ns = t.min_ns;
      const double ops = 2.0 * static_cast<double>(n) * static_cast<double>(n) *
                         static_cast<double>(n);
      row.throughput = ops / t.median_ns;  // ops per ns = Gop/s
      row.throughput_unit = "Gop/s";
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::vector<BenchRow> bench_bconv(const BenchConfig& cfg, bool bin) {
  std::mt19937_64 rng(cfg.seed);
  std::vector<BenchRow> rows;
  const std::size_t in_sz = cfg.conv_input, batch = cfg.conv_batch, k = cfg.conv_kernel;
  const Conv2dGeometry geo{k, k, 1, k / 2};
  for (std::size_t c = cfg.conv_min_c; c <= cfg.conv_max_c; c *= 2) {
    RealTensorNHWC xsrc(batch, in_sz, in_sz, c);
    std::vector<float> fw(k * k * c * c);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (auto& v : xsrc.v) v = dist(rng);
    for (auto& v : fw) v = dist(rng);
    BitTensorHWNC in_plain = pack_nhwc(xsrc);
    BitFilterKKOC filt_plain = pack_filter(fw, k, k, c, c);
    if (bin) {
      // fused timing never repacks, the float source is dead weight
      xsrc = RealTensorNHWC();
      fw.clear();
      fw.shrink_to_fit();
    }
    const BitTensorHWNC in_fsb = convert_activations(in_plain, true);
    const BitFilterKKOC filt_fsb = convert_filter(filt_plain, true);
    const std::vector<Threshold> sign_thr(c, Threshold{0.0, ThresholdKind::Geq});

    const std::size_t p_dim = geo.out_h(in_sz), q_dim = geo.out_w(in_sz);
    struct Side {
      const BitTensorHWNC* in;
      const BitFilterKKOC* filt;
      const char* layout;
    };
    const Side sides[] = {{&in_plain, &filt_plain, "plain"}, {&in_fsb, &filt_fsb, "fsb"}};
    for (const auto& side : sides) {
      const IntTensorPQNO once = bconv_pm1(*side.in, *side.filt, geo, cfg.threads);
      std::uniform_int_distribution<std::size_t> pd(0, p_dim - 1), qd(0, q_dim - 1),
          nd(0, batch - 1), od(0, c - 1);
      for (int t = 0; t < 16; ++t) {
        const std::size_t p = pd(rng), q = qd(rng), n = nd(rng), o = od(rng);
        const double ref = detail::ref_conv_entry(in_plain, filt_plain, geo, p, q, n, o);
        if (static_cast<double>(once.at(p, q, n, o)) != ref)
          throw validation_error("bench: bconv precheck failed at c=" + std::to_string(c));
      }

      BenchRow row;
      row.suite = bin ? "bconv-bin" : "bconv";
      row.kernel = bin ? "bconv_fused" : "bconv_pm1";
      row.variant = side.layout;
      row.layout = side.layout;
      row.shape = "c" + std::to_string(c) + "-i" + std::to_string(in_sz) + "-b" +
                  std::to_string(batch) + "-k" + std::to_string(k);
      row.threads = resolve_threads(cfg.threads);
      row.reps = cfg.reps;
      row.warmup = cfg.warmup;
      row.precheck = true;
      Timing t;
      if (bin) {
        ConvFused fz;
        fz.thresholds = sign_thr;
        fz.threads = cfg.threads;
        t = time_reps(cfg.reps, cfg.warmup, [&] {
          const BitTensorHWNC out = bconv_fused(*side.in, *side.filt, geo, fz);
          (void)out;
        });
      } else {
        const bool tiled = side.in->tiled;
        t = time_reps(cfg.reps, cfg.warmup, [&] {
          const BitTensorHWNC tin = pack_nhwc(xsrc, tiled);
          const BitFilterKKOC tf = pack_filter(fw, k, k, c, c, tiled);
          const IntTensorPQNO out = bconv_pm1(tin, tf, geo, cfg.threads);
          (void)out;
        });
      }
      row.median_ns = t.median_ns;
      row.mean_ns = t.mean_ns;
      row.min_ns = t.min_ns;
      const double ops = 2.0 * static_cast<double>(p_dim * q_dim) *
                         static_cast<double>(batch) * static_cast<double>(c) *
                         static_cast<double>(c) * static_cast<double>(k * k);
      row.throughput = ops / t.median_ns;
      row.throughput_unit = "Gop/s";
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

/// Sweeps batch size on a whole model. The oracle pass runs once at batch 1;
/// every swept batch additionally checks plain and fsb agree on labels.
inline std::vector<BenchRow> bench_model(const BenchConfig& cfg, const ModelSpec& m) {
  std::mt19937_64 rng(cfg.seed);
  const FloatWeights fw = random_weights(m, cfg.seed);
  const WeightStore ws_plain = build_weights(m, fw, false);
  const WeightStore ws_fsb = build_weights(m, fw, true);
  std::normal_distribution<float> dist(0.0f, 1.0f);

  {
    RealTensorNHWC probe(1, m.in_h, m.in_w, m.in_c);
    for (auto& v : probe.v) v = dist(rng);
    const auto ref = oracle::ref_pipeline(m, fw, probe);
    RunOptions opt;
    opt.threads = cfg.threads;
    const auto got = run_inference(m, ws_plain, probe, opt);
    if (got.logits != ref.logits || got.labels != ref.labels)
      throw validation_error("bench: model precheck failed for '" + m.name + "'");
  }

  std::vector<BenchRow> rows;
  for (const std::size_t batch : cfg.model_batches) {
    RealTensorNHWC x(batch, m.in_h, m.in_w, m.in_c);
    for (auto& v : x.v) v = dist(rng);
    RunOptions opt;
    opt.threads = cfg.threads;
    const auto base = run_inference(m, ws_plain, x, opt);
    const auto other = run_inference(m, ws_fsb, x, opt);
    if (base.labels != other.labels)
      throw validation_error("bench: layouts disagree for '" + m.name + "' at batch " +
                             std::to_string(batch));
    struct Side {
      const WeightStore* ws;
      const char* layout;
    };
    const Side sides[] = {{&ws_plain, "plain"}, {&ws_fsb, "fsb"}};
    for (const auto& side : sides) {
      BenchRow row;
      row.suite = "model";
      row.kernel = "run_inference";
      row.variant = "pipeline";
      row.layout = side.layout;
      row.shape = m.name + "-b" + std::to_string(batch);
      row.threads = resolve_threads(cfg.threads);
      row.reps = cfg.reps;
      row.warmup = cfg.warmup;
      row.precheck = true;
      const Timing t = time_reps(cfg.reps, cfg.warmup, [&] {
        const auto res = run_inference(m, *side.ws, x, opt);
        (void)res;
      });
      row.median_ns = t.median_ns;
      row.mean_ns = t.mean_ns;
      row.min_ns = t.min_ns;
      row.throughput = static_cast<double>(batch) * 1e9 / t.median_ns;
      row.throughput_unit = "img/s";
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline void write_csv(std::ostream& os, std::uint64_t seed,
                      const std::vector<BenchRow>& rows) {
  os << "# seed=" << seed << "\n";
  os << "suite,kernel,variant,layout,shape,threads,reps,warmup,median_ns,mean_ns,"
        "min_ns,throughput,throughput_unit,precheck\n";
  os.setf(std::ios::fixed);
  for (const BenchRow& r : rows) {
    os.precision(1);
    os << r.suite << ',' << r.kernel << ',' << r.variant << ',' << r.layout << ','
       << r.shape << ',' << r.threads << ',' << r.reps << ',' << r.warmup << ','
       << r.median_ns << ',' << r.mean_ns << ',' << r.min_ns << ',';
    os.precision(3);
    os << r.throughput << ',' << r.throughput_unit << ','
       << (r.precheck ? "ok" : "FAIL") << "\n";
  }
}

}  // namespace btnn::bench
