#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "biseunet/blocks.hpp"
#include "biseunet/model_config.hpp"
#include "biseunet/weights.hpp"

namespace biseunet {

struct BenchReport {
  std::size_t input_h = 0;
  std::size_t input_w = 0;
  int threads = 1;
  std::size_t warmup_iters = 0;
  std::size_t measured_iters = 0;
  std::vector<double> per_iter_ms;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double fps = 0.0;  // 1000 / mean_ms
  std::uint64_t peak_tensor_bytes = 0;
  std::uint64_t checksum = 0;   // output checksum of the last timed iteration
  bool checksum_stable = true;  // every iteration, warmup included, produced the same checksum
  std::optional<std::uint64_t> peak_rss_bytes;  // process high-water mark, when sampled
};

// Fills mean/p50/p95/fps and measured_iters from per_iter_ms. Percentiles interpolate linearly
// between closest ranks. Throws InvalidArgument on an empty list or non-positive mean.
void summarize_timings(BenchReport& report);

struct BenchOptions {
  std::size_t warmup = 10;
  std::size_t iters = 100;
  int threads = 1;
  std::uint64_t input_seed = 42;
  bool sample_rss = false;
};

// The fixed standard-normal benchmark input for cfg (batch 1).
Tensor benchmark_input(const ModelConfig& cfg, std::uint64_t seed);

// Untimed warmup forwards, then timed forwards on benchmark_input; every output is
// checksummed. Throws InvalidArgument when iters < 1.
BenchReport run_benchmark(const Model& model, const BenchOptions& options = {});

// Modeled peak live bytes: activation liveness over the model graph plus resident weights.
std::uint64_t peak_memory(const ModelConfig& cfg, const BlockWeights& weights);

// Process peak resident set size from /proc/self/status (VmHWM), if available.
std::optional<std::uint64_t> process_peak_rss();

std::string render_bench_text(const BenchReport& report);
// Header row then one data row; per_iter_ms is ';'-separated.
std::string render_bench_csv(const BenchReport& report);
std::string render_bench_json(const BenchReport& report);

}  // namespace biseunet
