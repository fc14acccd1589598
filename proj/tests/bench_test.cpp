#include "biseunet/bench.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "biseunet/blocks.hpp"
#include "biseunet/errors.hpp"
#include "biseunet/graph.hpp"
#include "biseunet/weights.hpp"
#include "json.hpp"

namespace biseunet {
namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.input_h = cfg.input_w = 64;
  cfg.cp_widths = {4, 6, 8, 10, 12};
  cfg.sp_widths = {4, 4, 6};
  cfg.sp_proj_channels = 5;
  cfg.fuse8_channels = 7;
  cfg.decoder_widths = {9, 6, 4};
  return cfg;
}

TEST(Summarize, PaperLatencyPairs) {
  BenchReport r;
  r.per_iter_ms.assign(100, 30.86);
  summarize_timings(r);
  EXPECT_NEAR(r.fps, 32.40, 0.005);
  EXPECT_EQ(r.measured_iters, 100u);
  EXPECT_DOUBLE_EQ(r.p50_ms, 30.86);
  EXPECT_NEAR(1000.0 / 30.48, 32.81, 0.005);
}

TEST(Summarize, PercentilesInterpolate) {
  BenchReport r;
  for (int i = 1; i <= 20; ++i) r.per_iter_ms.push_back(21 - i);  // unsorted on purpose
  summarize_timings(r);
  EXPECT_DOUBLE_EQ(r.mean_ms, 10.5);
  EXPECT_DOUBLE_EQ(r.p50_ms, 10.5);
  EXPECT_DOUBLE_EQ(r.p95_ms, 19.05);
  EXPECT_NEAR(r.fps * r.mean_ms, 1000.0, 1e-9);
  BenchReport one;
  one.per_iter_ms = {4.0};
  summarize_timings(one);
  EXPECT_EQ(one.p50_ms, 4.0);
  EXPECT_EQ(one.p95_ms, 4.0);
  BenchReport empty;
  EXPECT_THROW(summarize_timings(empty), InvalidArgument);
}

TEST(RunBenchmark, ReportInvariants) {
  const ModelConfig cfg = small_config();
  const Model model(cfg, init_weights(cfg, 1));
  BenchOptions opts;
  opts.warmup = 2;
  opts.iters = 7;
  const BenchReport r = run_benchmark(model, opts);
  EXPECT_EQ(r.per_iter_ms.size(), 7u);
  EXPECT_EQ(r.measured_iters, 7u);
  EXPECT_EQ(r.warmup_iters, 2u);
  EXPECT_EQ(r.input_h, 64u);
  EXPECT_LE(r.p50_ms, r.p95_ms);
  EXPECT_NEAR(r.fps * r.mean_ms, 1000.0, 1.0);
  EXPECT_TRUE(r.checksum_stable);
  EXPECT_EQ(r.peak_tensor_bytes, peak_memory(cfg, model.weights()));
  EXPECT_FALSE(r.peak_rss_bytes.has_value());
}

TEST(RunBenchmark, ChecksumMatchesPlainForward) {
  const ModelConfig cfg = small_config();
  const Model model(cfg, init_weights(cfg, 2));
  BenchOptions opts;
  opts.warmup = 0;
  opts.iters = 2;
  opts.input_seed = 9;
  const BenchReport a = run_benchmark(model, opts), b = run_benchmark(model, opts);
  EXPECT_EQ(a.checksum, b.checksum);
  EXPECT_EQ(a.checksum, checksum(model.forward(benchmark_input(cfg, 9))));
}

TEST(RunBenchmark, RejectsZeroIterations) {
  const ModelConfig cfg = small_config();
  BenchOptions opts;
  opts.iters = 0;
  EXPECT_THROW(run_benchmark(Model(cfg, init_weights(cfg, 1)), opts), InvalidArgument);
}

TEST(RunBenchmark, RssSampledOnRequest) {
  const ModelConfig cfg = small_config();
  BenchOptions opts;
  opts.warmup = 0;
  opts.iters = 1;
  opts.sample_rss = true;
  const BenchReport r = run_benchmark(Model(cfg, init_weights(cfg, 1)), opts);
  if (process_peak_rss()) EXPECT_GT(r.peak_rss_bytes.value_or(0), 0u);
}

TEST(PeakMemory, SingleConvClosedForm) {
  Graph g;
  const std::size_t in = g.input("input", 3, 256, 256);
  g.conv("conv", in, ConvSpec::square(3, 8, 3, 1, 1));
  const std::uint64_t weight_bytes = 8 * 3 * 9 * 4;
  EXPECT_EQ(peak_activation_bytes(g, g.insertion_order()) + weight_bytes, 786432u + 2097152u + 864u);
}

TEST(PeakMemory, IncludesWeightsAndGrowsWithArea) {
  const ModelConfig cfg = small_config();
  const BlockWeights w = init_weights(cfg, 1);
  const Graph g = build_model_graph(cfg);
  EXPECT_EQ(peak_memory(cfg, w), peak_activation_bytes(g, g.insertion_order()) + 4 * w.scalar_count());
  const ModelConfig big = cfg.with_input_size(128, 128);
  const Graph gb = build_model_graph(big);
  EXPECT_GE(peak_activation_bytes(gb, gb.insertion_order()), 2 * peak_activation_bytes(g, g.insertion_order()));
}

TEST(PeakMemory, DecoderScheduleInvariance) {
  const Graph g = build_model_graph(ModelConfig{});
  const auto order = g.insertion_order();
  // Defer the /8 fusion branch until after the first decoder block; x'/8 is first read by
  // dec.concat2, so both orders are valid.
  const std::set<std::size_t> fuse = {g.find("fuse.concat"), g.find("fuse.conv"), g.find("fuse.bn"),
                                      g.find("fuse.relu")};
  const std::size_t block1_end = g.find("dec.block1.pw_relu");
  std::vector<std::size_t> alt;
  for (std::size_t id : order) {
    if (fuse.count(id)) continue;
    alt.push_back(id);
    if (id == block1_end) {
      for (std::size_t f : order) {
        if (fuse.count(f)) alt.push_back(f);
      }
    }
  }
  ASSERT_NE(alt, order);
  g.check_schedule(alt);
  EXPECT_EQ(peak_activation_bytes(g, alt), peak_activation_bytes(g, order));
  std::vector<std::size_t> bad = order;
  std::swap(bad[0], bad[1]);
  EXPECT_THROW(g.check_schedule(bad), InvalidArgument);
}

TEST(Render, CsvAndJsonFields) {
  BenchReport r;
  r.input_h = r.input_w = 256;
  r.threads = 4;
  r.warmup_iters = 10;
  r.per_iter_ms = {30.0, 31.72};
  summarize_timings(r);
  const std::string csv = render_bench_csv(r);
  const std::string header = csv.substr(0, csv.find('\n'));
  for (const char* f : {"input_size", "threads", "warmup_iters", "measured_iters", "per_iter_ms", "mean_ms",
                        "p50_ms", "p95_ms", "fps", "peak_tensor_bytes"}) {
    EXPECT_NE(header.find(f), std::string::npos) << f;
  }
  EXPECT_NE(csv.find("30.000000;31.720000"), std::string::npos);
  const auto j = nlohmann::json::parse(render_bench_json(r));
  EXPECT_EQ(j.at("per_iter_ms").size(), 2u);
  EXPECT_NEAR(j.at("fps").get<double>(), 1000.0 / 30.86, 1e-9);
  EXPECT_NE(render_bench_text(r).find("fps"), std::string::npos);
}

}  // namespace
}  // namespace biseunet
