// Acceptance gate. Runs the full battery against the float oracle and prints
// one pass/fail line per criterion; exit status is nonzero if any line fails.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "btnn/bench.hpp"
#include "btnn/inference.hpp"
#include "btnn/oracle.hpp"
#include "btnn/weights.hpp"

namespace {

using namespace btnn;

constexpr int kThreadCounts[] = {1, 4, 8};

bool g_threads_agree = true;
std::string g_threads_note;

void note_thread_disagreement(const std::string& where) {
  g_threads_agree = false;
  if (g_threads_note.empty()) g_threads_note = where;
}

struct Outcome {
  bool pass = true;
  std::string note;

  void fail(const std::string& why) {
    pass = false;
    if (note.empty()) note = why;
  }
};

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::vector<double> random_pm1(std::mt19937_64& rng, std::size_t count) {
  std::vector<double> v(count);
  for (auto& x : v) x = (rng() & 1) ? 1.0 : -1.0;
  return v;
}

// criterion 1: the three matmul kernels reproduce the float oracle bit for bit
Outcome criterion1(double& elapsed) {
  const double t0 = now_s();
  Outcome out;
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> mk(8, 256);
  const std::size_t ns[] = {128, 256, 1024};
  struct V {
    BmmVariant variant;
    bool tiled;
    const char* name;
  };
  const V variants[] = {{BmmVariant::Naive, false, "naive"},
                        {BmmVariant::Blocked, false, "blocked"},
                        {BmmVariant::Fsb, true, "fsb"}};
  for (const auto& var : variants) {
    for (int cs = 0; cs < 200; ++cs) {
      const std::size_t m = mk(rng), k = mk(rng), n = ns[cs % 3];
      const auto af = random_pm1(rng, m * n);
      const auto bf = random_pm1(rng, n * k);
      const auto ref = oracle::ref_matmul(af, bf, m, n, k);
      const BitMatrix a =
          pack_matrix(af, m, n, var.tiled ? Layout::FsbRow : Layout::RowPacked);
      const BitMatrix b =
          pack_matrix(bf, n, k, var.tiled ? Layout::FsbCol : Layout::ColPacked);
      IntMatrix first;
      for (const int t : kThreadCounts) {
        const IntMatrix got = bmm_pm1(a, b, {var.variant, {}, t});
        if (t == kThreadCounts[0])
          first = got;
        else if (got.v != first.v)
          note_thread_disagreement("bmm " + std::string(var.name));
      }
      for (std::size_t i = 0; i < ref.size() && out.pass; ++i)
        if (static_cast<double>(first.v[i]) != ref[i])
          out.fail(std::string(var.name) + " case " + std::to_string(cs) +
                   " diverges from the oracle");
      if (!out.pass) break;
    }
    if (!out.pass) break;
  }
  elapsed = now_s() - t0;
  if (elapsed >= 60.0) out.fail("ran over the 60s budget");
  return out;
}

// criterion 2: padded strided convolution matches the zero-padding oracle
Outcome criterion2(double& elapsed) {
  const double t0 = now_s();
  Outcome out;
  std::mt19937_64 rng(202);
  const std::size_t ks[] = {1, 3, 5, 7, 11};
  const std::size_t strides[] = {1, 2, 4};
  const std::size_t pads[] = {0, 1, 2, 5};
  const std::size_t cs_[] = {128, 256};
  const std::size_t os_[] = {8, 16};
  const std::size_t ns_[] = {8, 16};
  auto pick = [&](auto& arr) { return arr[rng() % std::size(arr)]; };

  for (int cs = 0; cs < 100; ++cs) {
    std::size_t k, stride, pad, c, o, n, in_sz;
    if (cs == 0) {
      // pinned corner case: a 3x3 window at pad 1 drops 5 taps in the corner
      k = 3, stride = 1, pad = 1, c = 128, o = 8, n = 8, in_sz = 8;
      std::size_t live = 0;
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t s = 0; s < k; ++s)
          if (r >= pad && s >= pad) ++live;
      if (k * k - live != 5) out.fail("corner case does not exclude 5 taps");
    } else {
      k = pick(ks), stride = pick(strides), pad = pick(pads);
      c = pick(cs_), o = pick(os_), n = pick(ns_);
      const std::size_t extra = rng() % (k >= 11 ? 4 : 6);
      in_sz = std::max<std::size_t>(k > 2 * pad ? k - 2 * pad : 1, 3) + extra;
    }
    const Conv2dGeometry geo{k, k, stride, pad};
    const auto xd = random_pm1(rng, n * in_sz * in_sz * c);
    const auto wd = random_pm1(rng, k * k * o * c);
    const auto ref =
        oracle::ref_conv_zero_pad(xd, n, in_sz, in_sz, c, wd, o, k, k, stride, pad);

    RealTensorNHWC xt(n, in_sz, in_sz, c);
    for (std::size_t i = 0; i < xd.size(); ++i) xt.v[i] = static_cast<float>(xd[i]);
    std::vector<float> wf(wd.begin(), wd.end());
    const bool tiled = cs % 2 == 1;
    const BitTensorHWNC in_bits = pack_nhwc(xt, tiled);
    const BitFilterKKOC filt = pack_filter<float>(wf, k, k, o, c, tiled);

    IntTensorPQNO first;
    for (const int t : kThreadCounts) {
      const IntTensorPQNO got = bconv_pm1(in_bits, filt, geo, t);
      if (t == kThreadCounts[0])
        first = got;
      else if (!(got == first))
        note_thread_disagreement("bconv case " + std::to_string(cs));
    }
    for (std::size_t i = 0; i < ref.size() && out.pass; ++i)
      if (static_cast<double>(first.v[i]) != ref[i])
        out.fail("conv case " + std::to_string(cs) + " diverges from the oracle");
    if (!out.pass) break;
  }
  elapsed = now_s() - t0;
  if (elapsed >= 120.0) out.fail("ran over the 120s budget");
  return out;
}

// criterion 3: threshold folding agrees with bn-then-sign on every sample
Outcome criterion3(double& elapsed) {
  const double t0 = now_s();
  Outcome out;
  std::mt19937_64 rng(303);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> vard(0.25, 2.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::uniform_int_distribution<int> xi(-4096, 4096);
  std::size_t bad = 0;
  for (int i = 0; i < 100000; ++i) {
    BnParams bn;
    const double u = ud(rng);
    double gamma = nd(rng);
    if (u < 0.10)
      gamma = 0.0;  // folds to a constant decision
    else if (u < 0.55)
      gamma = -std::abs(gamma) - 1e-9;
    else
      gamma = std::abs(gamma) + 1e-9;
    bn.gamma = {gamma};
    bn.beta = {nd(rng)};
    bn.mean = {nd(rng) * 8.0};
    bn.var = {vard(rng)};
    const auto thr = fold_bn_sign(bn);
    const double x = (i % 5 == 0) ? nd(rng) * 64.0 : static_cast<double>(xi(rng));
    if (thr[0].fire(x) != (bn.apply(0, x) >= 0.0)) ++bad;
  }
  if (bad > 0) out.fail(std::to_string(bad) + " of 100000 pairs disagree");
  elapsed = now_s() - t0;
  return out;
}

// criterion 4: tiled round trips are lossless and never change model output
Outcome criterion4(double& elapsed) {
  const double t0 = now_s();
  Outcome out;
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> dim(1, 300);
  for (int cs = 0; cs < 1000 && out.pass; ++cs) {
    const std::size_t r = dim(rng), c = dim(rng);
    const auto vals = random_pm1(rng, r * c);
    const Layout lay = cs % 2 ? Layout::ColPacked : Layout::RowPacked;
    const BitMatrix plain = pack_matrix(vals, r, c, lay);
    const BitMatrix back = from_fsb(to_fsb(plain));
    if (back.rows() != r || back.cols() != c || back.layout() != lay ||
        !(back.bits() == plain.bits()))
      out.fail("matrix round trip " + std::to_string(cs) + " is lossy");
  }

  const ModelSpec models[] = {
      make_model("convnet", "6C3-P2-12FC", 8, 8, 2, 3),
      make_model("residual", "4C3-4C3-4C3-8C3/2-8C3-8C3", 10, 10, 2, 4,
                 {{0, 2}, {2, 4}}),
      make_model("mlp", "2x16FC", 4, 4, 1, 5),
  };
  std::normal_distribution<float> xf(0.0f, 1.0f);
  for (const auto& m : models) {
    const FloatWeights fw = random_weights(m, 77);
    const WeightStore stores[] = {build_weights(m, fw, false),
                                  build_weights(m, fw, true)};
    RealTensorNHWC x(8, m.in_h, m.in_w, m.in_c);
    for (auto& v : x.v) v = xf(rng);
    std::vector<double> first_logits;
    for (const auto& ws : stores)
      for (const int t : kThreadCounts) {
        RunOptions opt;
        opt.threads = t;
        const RunResult res = run_inference(m, ws, x, opt);
        if (first_logits.empty())
          first_logits = res.logits;
        else if (res.logits != first_logits) {
          out.fail("model '" + m.name + "' output depends on layout or threads");
          note_thread_disagreement("pipeline " + m.name);
        }
      }
  }
  elapsed = now_s() - t0;
  return out;
}

// criterion 5: engine labels equal oracle labels on every stock structure
Outcome criterion5(double& elapsed) {
  const double t0 = now_s();
  Outcome out;
  struct Entry {
    const char* file;
    bool reduce;  // large imagenet-era structures run at 64x64 here
  };
  const Entry entries[] = {{"mnist-mlp.json", false},  {"cifar-vgg.json", false},
                           {"cifar-resnet14.json", false}, {"alexnet.json", true},
                           {"vgg16.json", true},       {"resnet18.json", true}};
  std::mt19937_64 rng(505);
  std::normal_distribution<float> xf(0.0f, 1.0f);
  int idx = 0;
  for (const auto& e : entries) {
    std::ifstream is(std::string(BTNN_MODELS_DIR) + "/" + e.file);
    if (!is) {
      out.fail(std::string("cannot open ") + e.file);
      break;
    }
    nlohmann::json j = nlohmann::json::parse(is);
    if (e.reduce) {
      j["input"]["height"] = 64;
      j["input"]["width"] = 64;
    }
    const ModelSpec m = parse_model_text(j.dump());
    const FloatWeights fw = random_weights(m, 500 + idx);
    RealTensorNHWC x(64, m.in_h, m.in_w, m.in_c);
    for (auto& v : x.v) v = xf(rng);
    const oracle::RefResult ref = oracle::ref_pipeline(m, fw, x);
    const WeightStore ws = build_weights(m, fw, true);
    std::vector<int> first_labels;
    for (const int t : kThreadCounts) {
      RunOptions opt;
      opt.threads = t;
      const RunResult res = run_inference(m, ws, x, opt);
      if (first_labels.empty())
        first_labels = res.labels;
      else if (res.labels != first_labels)
        note_thread_disagreement("pipeline " + m.name);
      if (res.labels != ref.labels)
        out.fail("'" + m.name + "' labels diverge from the oracle");
    }
    ++idx;
    if (!out.pass) break;
  }
  elapsed = now_s() - t0;
  if (elapsed >= 600.0) out.fail("ran over the 600s budget");
  return out;
}

// criterion 6: the fused convolution equals the unfused chain it replaces
Outcome criterion6(double& elapsed) {
  const double t0 = now_s();
  Outcome out;
  std::mt19937_64 rng(606);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> vard(0.25, 2.0);
  for (int cs = 0; cs < 50 && out.pass; ++cs) {
    const std::size_t k = std::size_t{1} + 2 * (rng() % 3);  // 1, 3, 5
    const std::size_t stride = 1 + rng() % 2;
    const std::size_t pad = rng() % (k / 2 + 2);
    const std::size_t c = 32u << (rng() % 3);
    const std::size_t o = 4 + rng() % 29;
    const std::size_t n = 2 + rng() % 7;
    const std::size_t in_sz = std::max<std::size_t>(k > 2 * pad ? k - 2 * pad : 1, 3) +
                              rng() % 6;
    const bool tiled = cs % 2 == 1;
    const Conv2dGeometry geo{k, k, stride, pad};

    RealTensorNHWC xt(n, in_sz, in_sz, c);
    std::vector<float> wf(k * k * o * c);
    for (auto& v : xt.v) v = (rng() & 1) ? 1.0f : -1.0f;
    for (auto& v : wf) v = (rng() & 1) ? 1.0f : -1.0f;
    const BitTensorHWNC in_bits = pack_nhwc(xt, tiled);
    const BitFilterKKOC filt = pack_filter<float>(wf, k, k, o, c, tiled);
    const std::size_t p_dim = geo.out_h(in_sz), q_dim = geo.out_w(in_sz);

    std::vector<Threshold> thr;
    BnParams bn;
    RealTensorPQNO rin;
    const bool use_thresholds = cs % 2 == 0;
    bool with_rin = false, with_rout = false;
    if (use_thresholds) {
      const double span = static_cast<double>(c * k * k);
      std::uniform_real_distribution<double> td(-span, span);
      for (std::size_t j = 0; j < o; ++j) {
        Threshold t;
        t.tau = td(rng) + nd(rng) * 0.25;
        const unsigned pickk = rng() % 10;
        t.kind = pickk < 5   ? ThresholdKind::Geq
                 : pickk < 9 ? ThresholdKind::Leq
                 : pickk & 1 ? ThresholdKind::ConstPlus
                             : ThresholdKind::ConstMinus;
        thr.push_back(t);
      }
    } else {
      for (std::size_t j = 0; j < o; ++j) {
        bn.gamma.push_back(nd(rng));
        bn.beta.push_back(nd(rng));
        bn.mean.push_back(nd(rng) * 4.0);
        bn.var.push_back(vard(rng));
      }
      with_rin = rng() & 1;
      with_rout = !with_rin || (rng() & 1);
      if (with_rin) {
        rin = RealTensorPQNO(p_dim, q_dim, n, o);
        for (auto& v : rin.v) v = nd(rng) * 4.0;
      }
    }

    ConvFused f;
    if (use_thresholds) f.thresholds = thr;
    if (!use_thresholds) f.bn = &bn;
    if (with_rin) f.residual_in = &rin;
    RealTensorPQNO tap_fused;
    if (with_rout) f.residual_out = &tap_fused;

    // the unfused chain: raw accumulators, then bn or threshold per site
    const IntTensorPQNO ints = bconv_pm1(in_bits, filt, geo, 1);
    BitTensorHWNC expected(p_dim, q_dim, n, o, in_bits.tiled, in_bits.geo);
    RealTensorPQNO tap_expected(p_dim, q_dim, n, o);
    for (std::size_t p = 0; p < p_dim; ++p)
      for (std::size_t q = 0; q < q_dim; ++q)
        for (std::size_t nn = 0; nn < n; ++nn)
          for (std::size_t oo = 0; oo < o; ++oo) {
            const double v = ints.at(p, q, nn, oo);
            bool bit;
            if (use_thresholds) {
              bit = thr[oo].fire(v);
            } else {
              double y = bn.apply(oo, v);
              if (with_rin) y += rin.at(p, q, nn, oo);
              tap_expected.at(p, q, nn, oo) = y;
              bit = y >= 0.0;
            }
            if (bit) expected.set(p, q, nn, oo, true);
          }

    BitTensorHWNC first;
    for (const int t : kThreadCounts) {
      f.threads = t;
      RealTensorPQNO tap_run;
      if (with_rout) f.residual_out = &tap_run;
      const BitTensorHWNC got = bconv_fused(in_bits, filt, geo, f);
      if (t == kThreadCounts[0]) {
        first = got;
        tap_fused = tap_run;
      } else if (!(got.bits == first.bits) ||
                 (with_rout && tap_run.v != tap_fused.v)) {
        note_thread_disagreement("fused conv case " + std::to_string(cs));
      }
    }
    if (!(first.bits == expected.bits))
      out.fail("fused case " + std::to_string(cs) + " differs from the chain");
    if (with_rout && tap_fused.v != tap_expected.v)
      out.fail("fused case " + std::to_string(cs) + " tap differs from the chain");
  }
  elapsed = now_s() - t0;
  return out;
}

// criterion 7: packed matmul beats the float loop by 10x and the sweep runs
Outcome criterion7(double& elapsed) {
  const double t0 = now_s();
  Outcome out;
  std::mt19937_64 rng(707);
  const std::size_t n = 1024;
  const auto af = random_pm1(rng, n * n);
  const auto bf = random_pm1(rng, n * n);

  const double ref_start = now_s();
  const auto ref = oracle::ref_matmul(af, bf, n, n, n);
  const double t_ref = now_s() - ref_start;

  const BitMatrix a = pack_matrix(af, n, n, Layout::RowPacked);
  const BitMatrix b = pack_matrix(bf, n, n, Layout::ColPacked);
  IntMatrix got;
  double t_eng = 1e30;
  for (int rep = 0; rep < 3; ++rep) {
    const double s = now_s();
    got = bmm_pm1(a, b, {BmmVariant::Blocked, {}, 1});
    t_eng = std::min(t_eng, now_s() - s);
  }
  for (std::size_t i = 0; i < ref.size() && out.pass; ++i)
    if (static_cast<double>(got.v[i]) != ref[i])
      out.fail("1024^3 result diverges from the oracle");
  if (t_eng >= 2.0) out.fail("1024^3 took " + std::to_string(t_eng) + "s");
  if (t_ref < 10.0 * t_eng)
    out.fail("speedup only " + std::to_string(t_ref / t_eng) + "x");

  try {
    bench::BenchConfig cfg;
    cfg.seed = 7;
    cfg.reps = 2;
    cfg.warmup = 1;
    cfg.threads = 1;
    cfg.bmm_min_n = 128;
    cfg.bmm_max_n = 4096;
    const auto rows = bench::bench_bmm(cfg, false);
    if (rows.size() != 18) out.fail("sweep produced " + std::to_string(rows.size()) + " rows");
    for (const auto& r : rows)
      if (!r.precheck) out.fail("sweep precheck failed at " + r.shape);
  } catch (const std::exception& e) {
    out.fail(std::string("sweep threw: ") + e.what());
  }
  elapsed = now_s() - t0;
  if (!out.note.empty()) {
    std::ostringstream ss;
    ss << out.note << " (oracle " << t_ref << "s, packed " << t_eng << "s)";
    out.note = ss.str();
  }
  return out;
}

// criterion 8: the layout comparison table comes out whole with clean checks
Outcome criterion8(double& elapsed) {
  const double t0 = now_s();
  Outcome out;
  try {
    bench::BenchConfig cfg;
    cfg.seed = 8;
    cfg.reps = 1;
    cfg.warmup = 0;
    cfg.threads = 1;
    cfg.conv_input = 32;
    cfg.conv_batch = 16;
    cfg.conv_min_c = 128;
    cfg.conv_max_c = 2048;
    const auto rows = bench::bench_bconv(cfg, true);
    std::size_t plain = 0, fsb = 0;
    for (const auto& r : rows) {
      if (!r.precheck) out.fail("precheck failed at " + r.shape);
      if (r.layout == "plain") ++plain;
      if (r.layout == "fsb") ++fsb;
    }
    if (plain != 5 || fsb != 5)
      out.fail("expected 5 channel points per layout, got " + std::to_string(plain) +
               "/" + std::to_string(fsb));
  } catch (const std::exception& e) {
    out.fail(std::string("table run threw: ") + e.what());
  }
  elapsed = now_s() - t0;
  return out;
}

void print_line(int idx, const char* label, const Outcome& o, double elapsed) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(1);
  ss << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << idx << ": " << label
     << " (" << elapsed << "s)";
  if (!o.pass) ss << " -- " << o.note;
  std::cout << ss.str() << "\n" << std::flush;
}

}  // namespace

int main() {
  struct Row {
    const char* label;
    Outcome (*fn)(double&);
  };
  const Row rows[] = {
      {"matmul kernels match the float oracle on 600 cases", criterion1},
      {"padded strided convolution matches the zero-padding oracle on 100 cases",
       criterion2},
      {"threshold folding matches bn-then-sign on 100000 pairs", criterion3},
      {"tiled layout round trips losslessly and never changes model output",
       criterion4},
      {"engine labels equal oracle labels on all six stock structures", criterion5},
      {"fused convolution equals the unfused chain on 50 configurations",
       criterion6},
      {"packed matmul beats the float loop 10x at 1024^3 and sweeps to 4096",
       criterion7},
      {"channel sweep table covers 128..2048 in both layouts with clean checks",
       criterion8},
  };
  bool all = true;
  int idx = 1;
  for (const auto& row : rows) {
    double elapsed = 0.0;
    const Outcome o = row.fn(elapsed);
    print_line(idx, row.label, o, elapsed);
    all = all && o.pass;
    ++idx;
  }
  Outcome c9;
  if (!g_threads_agree) c9.fail("first divergence: " + g_threads_note);
  print_line(9, "results are identical at 1, 4 and 8 threads", c9, 0.0);
  all = all && c9.pass;
  std::cout << (all ? "acceptance: all criteria passed"
                    : "acceptance: FAILURES above")
            << "\n";
  return all ? 0 : 1;
}
