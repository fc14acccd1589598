#include "biseunet/selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "biseunet/analyzer.hpp"
#include "biseunet/bench.hpp"
#include "biseunet/blocks.hpp"
#include "biseunet/dataset.hpp"
#include "biseunet/kernels.hpp"
#include "biseunet/metrics.hpp"
#include "biseunet/reference.hpp"
#include "biseunet/rng.hpp"
#include "biseunet/weights.hpp"

namespace biseunet {

namespace {

struct Context {
  SplitMix64 rng;
  std::string fault;
  const std::string* current = nullptr;

  bool faulty() const { return *current == fault; }
  std::size_t uniform_int(std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }
  float normal() {
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2));
  }
  Tensor random_tensor(Shape s) {
    Tensor t(s);
    for (float& v : t.data()) v = normal();
    return t;
  }
  std::vector<float> random_vector(std::size_t n, float scale = 1.0f) {
    std::vector<float> v(n);
    for (float& x : v) x = scale * normal();
    return v;
  }
};

using Check = std::function<std::string(Context&)>;  // empty string = pass

std::string fail(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), f, a, b);
  return buf;
}

std::string check_conv_oracle(Context& ctx) {
  constexpr int kCases = 120;
  for (int i = 0; i < kCases; ++i) {
    const int family = i % 4;  // dense, depthwise, pointwise, grouped
    ConvSpec s;
    std::size_t groups = 1;
    if (family == 1) {
      groups = ctx.uniform_int(1, 16);
      s.in_channels = s.out_channels = groups;
    } else if (family == 3) {
      groups = ctx.uniform_int(2, 4);
      s.in_channels = groups * ctx.uniform_int(1, 4);
      s.out_channels = groups * ctx.uniform_int(1, 4);
    } else {
      s.in_channels = ctx.uniform_int(1, 16);
      s.out_channels = ctx.uniform_int(1, 16);
    }
    s.groups = groups;
    if (family == 2) {
      s.kernel_h = s.kernel_w = 1;
    } else {
      s.kernel_h = ctx.uniform_int(1, 5);
      s.kernel_w = ctx.uniform_int(1, 5);
      s.stride_h = ctx.uniform_int(1, 2);
      s.stride_w = ctx.uniform_int(1, 2);
      s.pad_h = ctx.uniform_int(0, s.kernel_h / 2);
      s.pad_w = ctx.uniform_int(0, s.kernel_w / 2);
    }
    s.has_bias = ctx.rng.below(2) == 1;
    const Shape shape{ctx.uniform_int(1, 2), s.in_channels, ctx.uniform_int(s.kernel_h, 16),
                      ctx.uniform_int(s.kernel_w, 16)};
    const Tensor x = ctx.random_tensor(shape);
    const auto w = ctx.random_vector(s.weight_count());
    const auto b = s.has_bias ? ctx.random_vector(s.out_channels) : std::vector<float>{};
    Tensor fast = conv2d(x, s, w, b);
    if (ctx.faulty()) fast.data()[0] += 1e-2f;
    std::vector<double> mag;
    const auto ref = reference::conv2d(x, s, w, b, &mag);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      const double err = std::abs(fast.data()[k] - ref[k]);
      if (err > 1e-5 * mag[k] + 1e-12) {
        return "case " + std::to_string(i) + ": |fast - oracle| = " + std::to_string(err);
      }
    }
  }
  return {};
}

std::string check_depthwise_delta(Context& ctx) {
  const Tensor x = ctx.random_tensor({1, 6, 11, 9});
  std::vector<float> w(6 * 9, 0.0f);
  for (std::size_t c = 0; c < 6; ++c) w[c * 9 + 4] = 1.0f;
  Tensor y = conv2d(x, ConvSpec::square(6, 6, 3, 1, 1, 6), w);
  if (ctx.faulty()) y.data()[3] += 1.0f;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::abs(y.data()[i] - x.data()[i]) > 1e-6) return "delta kernel changed the input";
  }
  return {};
}

std::string check_bilinear_oracle(Context& ctx) {
  const Tensor x({1, 1, 2, 2}, {0.0f, 1.0f, 2.0f, 3.0f});
  Tensor y = bilinear_resize(x, 4, 4);
  if (ctx.faulty()) y.data()[5] += 0.1f;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double sy = std::clamp((i + 0.5) * 2.0 / 4.0 - 0.5, 0.0, 1.0);
      const double sx = std::clamp((j + 0.5) * 2.0 / 4.0 - 0.5, 0.0, 1.0);
      // f(y, x) = 2y + x is bilinear, so interpolation reproduces it exactly.
      const double expect = 2.0 * sy + sx;
      if (std::abs(y.at(0, 0, i, j) - expect) > 1e-6) return fail("got %g, expected %g", y.at(0, 0, i, j), expect);
    }
  }
  return {};
}

std::string check_bn_fold(Context& ctx) {
  const ConvSpec s = ConvSpec::square(4, 6, 3, 1, 1, 1, true);
  const Tensor x = ctx.random_tensor({1, 4, 8, 8});
  const auto w = ctx.random_vector(s.weight_count());
  const auto b = ctx.random_vector(6);
  BnParams bn;
  bn.gamma = ctx.random_vector(6);
  bn.beta = ctx.random_vector(6);
  bn.running_mean = ctx.random_vector(6, 0.5f);
  for (int i = 0; i < 6; ++i) bn.running_var.push_back(0.5f + std::abs(ctx.normal()));
  const Tensor unfolded = batchnorm_infer(conv2d(x, s, w, b), bn);
  auto [wf, bf] = fold_bn_into_conv(w, b, bn);
  Tensor folded = conv2d(x, s, wf, bf);
  if (ctx.faulty()) folded.data()[0] += 1.0f;
  double max_ref = 0.0, max_err = 0.0;
  for (std::size_t i = 0; i < folded.size(); ++i) {
    max_ref = std::max(max_ref, std::abs(static_cast<double>(unfolded.data()[i])));
    max_err = std::max(max_err, std::abs(static_cast<double>(folded.data()[i]) - unfolded.data()[i]));
  }
  if (max_err > 1e-5 * max_ref) return fail("max error %g vs scale %g", max_err, max_ref);
  return {};
}

std::string check_analyzer_closed_form(Context& ctx) {
  LayerReport r = count_layer(ConvSpec::square(3, 24, 3, 2, 1), 128, 128, true);
  if (ctx.faulty()) r.macs += 1;
  if (r.params != 696 || r.macs != 10616832) return fail("3->24 conv: params %g, macs %g", r.params, r.macs);
  r = count_layer(ConvSpec::square(384, 384, 3, 1, 1, 384), 16, 16, false);
  if (r.params != 3456 || r.macs != 884736) return fail("depthwise: params %g, macs %g", r.params, r.macs);
  return {};
}

std::string check_analyzer_weights(Context& ctx) {
  const ModelConfig cfg;
  const CostReport report = analyze_model(cfg);
  const BlockWeights w = init_weights(cfg, ctx.rng.next());
  std::uint64_t params = w.trainable_count();
  if (ctx.faulty()) params += 1;
  if (params != report.total_params) {
    return fail("init_weights holds %g trainable scalars, analyzer reports %g",
                static_cast<double>(params), static_cast<double>(report.total_params));
  }
  return {};
}

std::string check_graph_forward(Context& ctx) {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 64;
  cfg.cp_widths = {4, 6, 8, 10, 12};
  cfg.sp_widths = {4, 4, 6};
  cfg.sp_proj_channels = 5;
  cfg.fuse8_channels = 6;
  cfg.decoder_widths = {8, 6, 4};
  const BlockWeights w = init_weights(cfg, ctx.rng.next());
  const Tensor x = ctx.random_tensor({1, 3, 64, 64});
  Tensor direct = model_forward(x, cfg, w);
  if (ctx.faulty()) direct.data()[0] += 1.0f;
  const Graph g = build_model_graph(cfg);
  const Tensor via_graph = execute_graph(g, g.insertion_order(), x, w);
  if (!(direct == via_graph)) return "model_forward and the analyzer graph disagree";
  return {};
}

std::string check_loss_gradient(Context& ctx) {
  for (int inst = 0; inst < 50; ++inst) {
    std::vector<double> z(15), t(15);
    for (std::size_t i = 0; i < 15; ++i) {
      z[i] = 2.0 * ctx.normal();
      t[i] = static_cast<double>(ctx.rng.below(2));
    }
    const double wd = 0.5 + ctx.rng.uniform(), wb = 0.5 + ctx.rng.uniform();
    auto g = loss_grad_logits(z, t, wd, wb);
    if (ctx.faulty()) g[0] *= 1.1;
    for (std::size_t i = 0; i < 15; ++i) {
      const double h = 1e-4;
      auto zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      const double fd = (combined_loss(zp, t, wd, wb) - combined_loss(zm, t, wd, wb)) / (2 * h);
      if (std::abs(g[i]) > 1e-6 && std::abs(g[i] - fd) > 1e-4 * std::abs(fd)) {
        return fail("analytic %g vs finite difference %g", g[i], fd);
      }
    }
  }
  return {};
}

std::string check_metric_identity(Context& ctx) {
  for (int i = 0; i < 200; ++i) {
    Tensor p({1, 1, 8, 8}), g({1, 1, 8, 8});
    for (float& v : p.data()) v = static_cast<float>(ctx.rng.below(2));
    for (float& v : g.data()) v = static_cast<float>(ctx.rng.below(2));
    const double d = dice_score(p, g);
    double iou = iou_score(p, g);
    if (ctx.faulty()) iou += 1e-3;
    if (std::abs(iou - d / (2.0 - d)) > 1e-6) return fail("iou %g vs dice/(2-dice) %g", iou, d / (2.0 - d));
  }
  return {};
}

std::string check_split_sizes(Context& ctx) {
  std::vector<SamplePair> pairs;
  for (int i = 0; i < 1000; ++i) pairs.push_back({std::to_string(100000 + i), {}, {}});
  DatasetSplit s = split_dataset(pairs, 42);
  if (ctx.faulty()) s.test.pop_back();
  if (s.train.size() != 700 || s.val.size() != 150 || s.test.size() != 150) {
    return "sizes " + std::to_string(s.train.size()) + "/" + std::to_string(s.val.size()) + "/" +
           std::to_string(s.test.size());
  }
  return {};
}

std::string check_bench_arithmetic(Context& ctx) {
  BenchReport r;
  r.per_iter_ms.assign(100, 30.86);
  summarize_timings(r);
  if (ctx.faulty()) r.fps += 1.0;
  if (std::abs(r.fps - 32.40) > 0.005) return fail("fps %g for mean %g ms", r.fps, r.mean_ms);
  return {};
}

const std::vector<std::pair<std::string, Check>>& checks() {
  static const std::vector<std::pair<std::string, Check>> list = {
      {"conv_oracle", check_conv_oracle},
      {"depthwise_delta", check_depthwise_delta},
      {"bilinear_oracle", check_bilinear_oracle},
      {"bn_fold", check_bn_fold},
      {"analyzer_closed_form", check_analyzer_closed_form},
      {"analyzer_weights", check_analyzer_weights},
      {"graph_forward", check_graph_forward},
      {"loss_gradient", check_loss_gradient},
      {"metric_identity", check_metric_identity},
      {"split_sizes", check_split_sizes},
      {"bench_arithmetic", check_bench_arithmetic},
  };
  return list;
}

}  // namespace

std::vector<std::string> selftest_check_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : checks()) names.push_back(name);
  return names;
}

std::vector<CheckResult> run_selftest(const SelftestOptions& options) {
  std::vector<CheckResult> results;
  Context ctx{SplitMix64(options.seed), options.inject_fault};
  for (const auto& [name, check] : checks()) {
    ctx.current = &name;
    CheckResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r.detail = check(ctx);
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results.push_back(std::move(r));
  }
  return results;
}

std::string render_selftest_table(const std::vector<CheckResult>& results) {
  std::ostringstream out;
  char line[256];
  for (const CheckResult& r : results) {
    std::snprintf(line, sizeof(line), "%-4s %-22s %8.3fs  %s\n", r.passed ? "PASS" : "FAIL",
                  r.name.c_str(), r.seconds, r.detail.c_str());
    out << line;
  }
  return out.str();
}

}  // namespace biseunet
