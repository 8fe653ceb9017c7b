#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "btnn/bench.hpp"
#include "btnn/inference.hpp"
#include "btnn/io.hpp"
#include "btnn/model.hpp"
#include "btnn/oracle.hpp"
#include "btnn/weights.hpp"

namespace {

btnn::ModelSpec load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw btnn::io_error("cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return btnn::parse_model_text(text);
}

// "-" means stdout
struct OutStream {
  std::ofstream file;
  std::ostream* os = &std::cout;

  explicit OutStream(const std::string& path) {
    if (path == "-") return;
    file.open(path);
    if (!file) throw btnn::io_error("cannot open " + path + " for writing");
    os = &file;
  }
};

struct ConvertArgs {
  std::string model, weights, save_float, out, layout = "fsb";
  std::uint64_t seed = 1;
  bool seeded = false;
};

int run_convert(const ConvertArgs& a) {
  const auto model = load_model(a.model);
  btnn::FloatWeights fw;
  if (!a.weights.empty())
    fw = btnn::read_float_weights(a.weights, model);
  else
    fw = btnn::random_weights(model, a.seed);
  if (!a.save_float.empty()) btnn::write_float_weights(a.save_float, model, fw);
  const auto ws = btnn::build_weights(model, fw, a.layout == "fsb");
  btnn::save_weights(a.out, model, ws);
  std::cerr << "converted '" << model.name << "' (" << model.layers.size()
            << " layers, " << a.layout << " layout) -> " << a.out << "\n";
  return 0;
}

struct InferArgs {
  std::string model, weights, input, out = "-", csv = "-", layout = "fsb";
  std::size_t random_batch = 0;
  std::uint64_t seed = 1;
  int threads = 0;
  bool breakdown = false;
};

int run_infer(const InferArgs& a) {
  const auto model = load_model(a.model);
  const auto ws = btnn::load_weights(a.weights, model, a.layout == "fsb");
  btnn::RealTensorNHWC x;
  if (!a.input.empty()) {
    x = btnn::read_batch(a.input);
  } else {
    x = btnn::RealTensorNHWC(a.random_batch, model.in_h, model.in_w, model.in_c);
    std::mt19937_64 rng(a.seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (auto& v : x.v) v = dist(rng);
  }
  btnn::RunOptions opt;
  opt.threads = a.threads;
  opt.breakdown = a.breakdown;
  const auto res = btnn::run_inference(model, ws, x, opt);

  OutStream pred(a.out);
  pred.os->precision(std::numeric_limits<double>::max_digits10);
  *pred.os << "sample,label";
  for (std::size_t j = 0; j < res.classes; ++j) *pred.os << ",score" << j;
  *pred.os << "\n";
  for (std::size_t n = 0; n < res.batch; ++n) {
    *pred.os << n << ',' << res.labels[n];
    for (std::size_t j = 0; j < res.classes; ++j)
      *pred.os << ',' << res.logits[n * res.classes + j];
    *pred.os << "\n";
  }

  if (a.breakdown) {
    OutStream bd(a.csv);
    double total = 0.0;
    for (const auto& t : res.timings) total += t.ms;
    *bd.os << "layer,latency_ms,percent\n";
    bd.os->setf(std::ios::fixed);
    bd.os->precision(3);
    for (const auto& t : res.timings)
      *bd.os << t.label << ',' << t.ms << ',' << (total > 0 ? t.ms / total * 100.0 : 0.0)
             << "\n";
  }
  return 0;
}

struct BenchArgs {
  std::string suite, model, csv = "-";
  btnn::bench::BenchConfig cfg;
};

int run_bench(const BenchArgs& a) {
  std::vector<btnn::bench::BenchRow> rows;
  if (a.suite == "bmm" || a.suite == "bmm-bin") {
    rows = btnn::bench::bench_bmm(a.cfg, a.suite == "bmm-bin");
  } else if (a.suite == "bconv" || a.suite == "bconv-bin") {
    rows = btnn::bench::bench_bconv(a.cfg, a.suite == "bconv-bin");
  } else {
    if (a.model.empty())
      throw btnn::invalid_input("bench: the model suite needs --model");
    rows = btnn::bench::bench_model(a.cfg, load_model(a.model));
  }
  OutStream out(a.csv);
  btnn::bench::write_csv(*out.os, a.cfg.seed, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bit-packed binarized network inference engine"};
  app.require_subcommand(1);

  ConvertArgs ca;
  auto* conv = app.add_subcommand("convert", "binarize float weights into a bit weight file");
  conv->add_option("--model", ca.model, "model spec (json)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* cw = conv->add_option("--weights", ca.weights, "float weight file (BTFW)")
                 ->check(CLI::ExistingFile);
  auto* cs = conv->add_option("--seed", ca.seed, "generate random float weights instead");
  conv->add_option("--save-float", ca.save_float, "also write the float weights (BTFW)");
  conv->add_option("--out", ca.out, "output bit weight file (BTNN)")->required();
  conv->add_option("--layout", ca.layout, "bit layout")
      ->check(CLI::IsMember({"plain", "fsb"}));
  cw->excludes(cs);

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "run a batch through a converted model");
  inf->add_option("--model", ia.model, "model spec (json)")
      ->required()
      ->check(CLI::ExistingFile);
  inf->add_option("--weights", ia.weights, "bit weight file (BTNN)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* ii = inf->add_option("--input", ia.input, "input batch file (BTIN)")
                 ->check(CLI::ExistingFile);
  auto* ir = inf->add_option("--random", ia.random_batch, "run N random inputs instead")
                 ->check(CLI::PositiveNumber);
  inf->add_option("--seed", ia.seed, "seed for --random");
  inf->add_option("--layout", ia.layout, "activation layout")
      ->check(CLI::IsMember({"plain", "fsb"}));
  inf->add_option("--threads", ia.threads, "worker threads (0 = BTNN_THREADS env or hw)");
  inf->add_flag("--breakdown", ia.breakdown, "emit per-layer latency table");
  inf->add_option("--out", ia.out, "predictions csv path, - for stdout");
  inf->add_option("--csv", ia.csv, "breakdown csv path, - for stdout");
  ii->excludes(ir);

  BenchArgs ba;
  auto* ben = app.add_subcommand("bench", "kernel and model benchmarks, csv report");
  ben->add_option("--suite", ba.suite, "bmm | bmm-bin | bconv | bconv-bin | model")
      ->required()
      ->check(CLI::IsMember({"bmm", "bmm-bin", "bconv", "bconv-bin", "model"}));
  ben->add_option("--model", ba.model, "model spec for the model suite")
      ->check(CLI::ExistingFile);
  ben->add_option("--seed", ba.cfg.seed, "data seed, echoed in the report header");
  ben->add_option("--reps", ba.cfg.reps, "timed repetitions per case")
      ->check(CLI::PositiveNumber);
  ben->add_option("--warmup", ba.cfg.warmup, "untimed warmup iterations")
      ->check(CLI::NonNegativeNumber);
  ben->add_option("--threads", ba.cfg.threads, "worker threads (0 = BTNN_THREADS env or hw)");
  ben->add_option("--min-n", ba.cfg.bmm_min_n, "bmm sweep lower bound");
  ben->add_option("--max-n", ba.cfg.bmm_max_n, "bmm sweep upper bound");
  ben->add_option("--input-size", ba.cfg.conv_input, "bconv sweep input height/width");
  ben->add_option("--conv-batch", ba.cfg.conv_batch, "bconv sweep batch");
  ben->add_option("--min-c", ba.cfg.conv_min_c, "bconv sweep channel lower bound");
  ben->add_option("--max-c", ba.cfg.conv_max_c, "bconv sweep channel upper bound");
  ben->add_option("--batches", ba.cfg.model_batches, "model suite batch sizes")
      ->delimiter(',');
  ben->add_option("--csv", ba.csv, "report path, - for stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (conv->parsed()) {
      ca.seeded = cs->count() > 0;
      if (ca.weights.empty() && !ca.seeded)
        throw btnn::invalid_input("convert: need --weights or --seed");
      return run_convert(ca);
    }
    if (inf->parsed()) {
      if (ia.input.empty() && ia.random_batch == 0)
        throw btnn::invalid_input("infer: need --input or --random");
      return run_infer(ia);
    }
    return run_bench(ba);
  } catch (const std::exception& e) {
    std::cerr << "btnn: error: " << e.what() << "\n";
    return 1;
  }
}
