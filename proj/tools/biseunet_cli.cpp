#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "biseunet/analyzer.hpp"
#include "biseunet/bench.hpp"
#include "biseunet/blocks.hpp"
#include "biseunet/dataset.hpp"
#include "biseunet/errors.hpp"
#include "biseunet/image_io.hpp"
#include "biseunet/kernels.hpp"
#include "biseunet/metrics.hpp"
#include "biseunet/model_config.hpp"
#include "biseunet/selftest.hpp"
#include "biseunet/weights.hpp"
#include "biseunet/weights_io.hpp"

namespace fs = std::filesystem;
using namespace biseunet;

namespace {

enum ExitCode { kOk = 0, kCheckFailed = 1, kUsage = 2, kIo = 3 };

ModelConfig config_or_default(const std::string& path) {
  return path.empty() ? ModelConfig{} : load_model_config(path);
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f || !(f << text)) throw IoError("cannot write " + out_path);
}

// --input-size accepts "256" or "256,320".
ModelConfig apply_input_size(const ModelConfig& cfg, const std::string& size) {
  if (size.empty()) return cfg;
  const auto comma = size.find(',');
  try {
    const std::size_t h = std::stoul(size.substr(0, comma));
    const std::size_t w = comma == std::string::npos ? h : std::stoul(size.substr(comma + 1));
    return cfg.with_input_size(h, w);
  } catch (const std::logic_error&) {
    throw InvalidArgument("bad --input-size '" + size + "'");
  }
}

struct AnalyzeArgs {
  std::string config, input_size, format = "text", out;
};

int cmd_analyze(const AnalyzeArgs& a) {
  const ModelConfig cfg = apply_input_size(config_or_default(a.config), a.input_size);
  const CostReport report = analyze_model(cfg);
  if (a.format == "csv") {
    emit(render_cost_csv(report), a.out);
  } else if (a.format == "json") {
    emit(render_cost_json(report), a.out);
  } else {
    emit(render_cost_text(report), a.out);
  }
  return kOk;
}

struct InferArgs {
  std::string config, weights, image, out, prob_out, raw;
  bool fold_bn = false;
};

Image8 to_gray(const Tensor& plane, std::size_t h, std::size_t w, bool threshold) {
  Image8 img;
  img.width = w;
  img.height = h;
  img.channels = 1;
  img.pixels.resize(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    const float z = plane.data()[i];
    if (threshold) {
      img.pixels[i] = z > 0.0f ? 255 : 0;  // sigmoid(z) > 0.5
    } else {
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(sigmoid(z) * 255.0f));
    }
  }
  return img;
}

int cmd_infer(const InferArgs& a) {
  const ModelConfig cfg = config_or_default(a.config);
  const Model model(cfg, load_weights(a.weights, cfg), a.fold_bn);
  const Image8 src = read_image(a.image);
  const Tensor x = image_to_tensor(src, cfg.input_h, cfg.input_w);
  Tensor logits = model.forward(x);
  logits = bilinear_resize(logits, src.height, src.width);
  write_png(a.out, to_gray(logits, src.height, src.width, true));
  if (!a.prob_out.empty()) write_png(a.prob_out, to_gray(logits, src.height, src.width, false));
  if (!a.raw.empty()) {
    std::vector<float> probs(logits.data().begin(), logits.data().end());
    for (float& v : probs) v = sigmoid(v);
    const Shape s = logits.shape();
    NamedTensor t{"prob",
                  {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                   static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
                  std::move(probs)};
    write_tensor_file(a.raw, std::span<const NamedTensor>(&t, 1));
  }
  return kOk;
}

struct EvalArgs {
  std::string config, weights, images, masks, split = "test", out, format = "text", skip_log;
  std::uint64_t seed = 42;
  bool ideal = false;
};

int cmd_eval(const EvalArgs& a) {
  const ModelConfig cfg = config_or_default(a.config);
  const SplitSection section = parse_split_section(a.split);
  const PairingResult paired = pair_dataset(a.images, a.masks);
  if (!a.skip_log.empty()) emit(skip_log(paired), a.skip_log);
  const DatasetSplit split = split_dataset(paired.pairs, a.seed);
  const auto& pairs = split.section(section);

  SegScores scores;
  if (a.ideal) {
    // Test seam: the ground truth itself as the probability map.
    scores = evaluate_pairs(pairs, cfg.input_h, cfg.input_w, [&](const SamplePair& p, const Tensor&) {
      return load_mask(p.mask_path, cfg.input_h, cfg.input_w);
    });
  } else {
    if (a.weights.empty()) throw InvalidArgument("--weights is required");
    const Model model(cfg, load_weights(a.weights, cfg));
    scores = evaluate_split(model, pairs);
  }

  const std::string rendered = a.format == "json" ? scores_json(scores) : scores_csv(scores);
  emit(rendered, a.out);
  if (!a.out.empty() && a.format == "text") {
    std::printf("%s: %zu images, dice %.4f, iou %.4f\n", a.split.c_str(), scores.per_image.size(),
                scores.dice, scores.iou);
  }
  for (const auto& f : scores.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
  return kOk;
}

struct SplitArgs {
  std::string images, masks, out;
  std::uint64_t seed = 42;
};

int cmd_split(const SplitArgs& a) {
  const PairingResult paired = pair_dataset(a.images, a.masks);
  emit(split_manifest(split_dataset(paired.pairs, a.seed)), a.out);
  return kOk;
}

struct BenchArgs {
  std::string config, weights, format = "text", input_size;
  int iters = 100, warmup = 10, threads = 1;
  std::uint64_t seed = 42;
  bool rss = false, fold_bn = false;
};

int cmd_bench(const BenchArgs& a) {
  if (a.iters < 1) throw InvalidArgument("--iters must be >= 1");
  if (a.warmup < 0) throw InvalidArgument("--warmup must be >= 0");
  if (a.threads < 1) throw InvalidArgument("--threads must be >= 1");
  const ModelConfig cfg = apply_input_size(config_or_default(a.config), a.input_size);
  BlockWeights w = a.weights.empty() ? init_weights(cfg, a.seed) : load_weights(a.weights, cfg);
  const Model model(cfg, std::move(w), a.fold_bn);
  BenchOptions opts;
  opts.iters = a.iters;
  opts.warmup = a.warmup;
  opts.threads = a.threads;
  opts.input_seed = a.seed;
  opts.sample_rss = a.rss;
  const BenchReport report = run_benchmark(model, opts);
  if (a.format == "csv") {
    std::cout << render_bench_csv(report);
  } else if (a.format == "json") {
    std::cout << render_bench_json(report);
  } else {
    std::cout << render_bench_text(report);
  }
  return kOk;
}

struct InitArgs {
  std::string config, out;
  std::uint64_t seed = 42;
};

int cmd_init_weights(const InitArgs& a) {
  const ModelConfig cfg = config_or_default(a.config);
  save_weights(init_weights(cfg, a.seed), a.out);
  return kOk;
}

int cmd_selftest(const std::string& inject_fault, std::uint64_t seed) {
  SelftestOptions opts;
  opts.seed = seed;
  opts.inject_fault = inject_fault;
  const auto results = run_selftest(opts);
  std::cout << render_selftest_table(results);
  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << (failed ? std::to_string(failed) + " check(s) failed\n" : "all checks passed\n");
  return failed ? kCheckFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BiSe-UNet inference engine, cost analyzer and evaluation harness"};
  app.require_subcommand(1);
  const auto formats = CLI::IsMember({"text", "csv", "json"});

  AnalyzeArgs analyze;
  auto* sa = app.add_subcommand("analyze", "Per-layer parameter and MAC counts");
  sa->add_option("--config", analyze.config, "Model config file")->check(CLI::ExistingFile);
  sa->add_option("--input-size", analyze.input_size, "H or H,W (multiples of 32)");
  sa->add_option("--format", analyze.format)->check(formats);
  sa->add_option("--out", analyze.out, "Write report here instead of stdout");

  InferArgs infer;
  auto* si = app.add_subcommand("infer", "Segment one image");
  si->add_option("--config", infer.config)->check(CLI::ExistingFile);
  si->add_option("--weights", infer.weights)->required()->check(CLI::ExistingFile);
  si->add_option("--image", infer.image)->required()->check(CLI::ExistingFile);
  si->add_option("--out", infer.out, "Binary mask PNG")->required();
  si->add_option("--prob-out", infer.prob_out, "8-bit probability PNG");
  si->add_option("--raw", infer.raw, "Full-precision probabilities as a BSUW tensor file");
  si->add_flag("--fold-bn", infer.fold_bn);

  EvalArgs eval;
  auto* se = app.add_subcommand("eval", "Dice/IoU over one section of the seeded split");
  se->add_option("--config", eval.config)->check(CLI::ExistingFile);
  se->add_option("--weights", eval.weights)->check(CLI::ExistingFile);
  se->add_option("--images", eval.images)->required()->check(CLI::ExistingDirectory);
  se->add_option("--masks", eval.masks)->required()->check(CLI::ExistingDirectory);
  se->add_option("--split", eval.split)->check(CLI::IsMember({"train", "val", "test"}));
  se->add_option("--seed", eval.seed);
  se->add_option("--out", eval.out, "Scores file (stdout if omitted)");
  se->add_option("--format", eval.format)->check(formats);
  se->add_option("--skip-log", eval.skip_log, "Write unmatched files here");
  se->add_flag("--ideal-predictor", eval.ideal)->group("");

  SplitArgs split;
  auto* ss = app.add_subcommand("split", "Write the seeded train/val/test manifest");
  ss->add_option("--images", split.images)->required()->check(CLI::ExistingDirectory);
  ss->add_option("--masks", split.masks)->required()->check(CLI::ExistingDirectory);
  ss->add_option("--seed", split.seed);
  ss->add_option("--out", split.out);

  BenchArgs bench;
  auto* sb = app.add_subcommand("bench", "Latency and throughput");
  sb->add_option("--config", bench.config)->check(CLI::ExistingFile);
  sb->add_option("--weights", bench.weights)->check(CLI::ExistingFile);
  sb->add_option("--input-size", bench.input_size);
  sb->add_option("--iters", bench.iters);
  sb->add_option("--warmup", bench.warmup);
  sb->add_option("--threads", bench.threads);
  sb->add_option("--seed", bench.seed);
  sb->add_option("--format", bench.format)->check(formats);
  sb->add_flag("--rss", bench.rss, "Also sample process peak RSS");
  sb->add_flag("--fold-bn", bench.fold_bn);

  InitArgs init;
  auto* sw = app.add_subcommand("init-weights", "Write seeded He-initialized weights");
  sw->add_option("--config", init.config)->check(CLI::ExistingFile);
  sw->add_option("--seed", init.seed);
  sw->add_option("--out", init.out)->required();

  std::string inject_fault;
  std::uint64_t selftest_seed = 42;
  auto* st = app.add_subcommand("selftest", "Kernel oracles and cross-checks");
  st->add_option("--seed", selftest_seed);
  st->add_option("--inject-fault", inject_fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*sa) return cmd_analyze(analyze);
    if (*si) return cmd_infer(infer);
    if (*se) return cmd_eval(eval);
    if (*ss) return cmd_split(split);
    if (*sb) return cmd_bench(bench);
    if (*sw) return cmd_init_weights(init);
    if (*st) return cmd_selftest(inject_fault, selftest_seed);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const DecodeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
