#include "biseunet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "biseunet/errors.hpp"
#include "biseunet/graph.hpp"
#include "biseunet/rng.hpp"
#include "json.hpp"

namespace biseunet {

namespace {

double percentile(std::vector<double> sorted, double q) {
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

void summarize_timings(BenchReport& r) {
  if (r.per_iter_ms.empty()) throw InvalidArgument("summarize_timings: no timings");
  r.measured_iters = r.per_iter_ms.size();
  r.mean_ms = std::accumulate(r.per_iter_ms.begin(), r.per_iter_ms.end(), 0.0) /
              static_cast<double>(r.per_iter_ms.size());
  if (!(r.mean_ms > 0.0)) throw InvalidArgument("summarize_timings: mean latency must be > 0");
  r.p50_ms = percentile(r.per_iter_ms, 0.50);
  r.p95_ms = percentile(r.per_iter_ms, 0.95);
  r.fps = 1000.0 / r.mean_ms;
}

Tensor benchmark_input(const ModelConfig& cfg, std::uint64_t seed) {
  Tensor x({1, cfg.in_channels, cfg.input_h, cfg.input_w});
  NormalSampler normal(seed);
  for (float& v : x.data()) v = static_cast<float>(normal.next());
  return x;
}

BenchReport run_benchmark(const Model& model, const BenchOptions& options) {
  if (options.iters < 1) throw InvalidArgument("run_benchmark: iters must be >= 1");
  const ModelConfig& cfg = model.config();
  const int previous_threads = num_threads();
  set_num_threads(options.threads);

  BenchReport r;
  r.input_h = cfg.input_h;
  r.input_w = cfg.input_w;
  r.threads = num_threads();
  r.warmup_iters = options.warmup;
  r.peak_tensor_bytes = peak_memory(cfg, model.weights());

  const Tensor input = benchmark_input(cfg, options.input_seed);
  bool seen = false;
  auto note = [&](std::uint64_t sum) {
    if (seen && sum != r.checksum) r.checksum_stable = false;
    r.checksum = sum;
    seen = true;
  };
  for (std::size_t i = 0; i < options.warmup; ++i) note(checksum(model.forward(input)));

  using Clock = std::chrono::steady_clock;
  r.per_iter_ms.reserve(options.iters);
  for (std::size_t i = 0; i < options.iters; ++i) {
    const auto t0 = Clock::now();
    const Tensor out = model.forward(input);
    const std::uint64_t sum = checksum(out);
    const auto t1 = Clock::now();
    r.per_iter_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    note(sum);
  }
  set_num_threads(previous_threads);
  summarize_timings(r);
  if (options.sample_rss) r.peak_rss_bytes = process_peak_rss();
  return r;
}

std::uint64_t peak_memory(const ModelConfig& cfg, const BlockWeights& weights) {
  const Graph g = build_model_graph(cfg);
  const auto order = g.insertion_order();
  return peak_activation_bytes(g, order) + weights.scalar_count() * sizeof(float);
}

std::optional<std::uint64_t> process_peak_rss() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream in(line.substr(6));
      std::uint64_t kb = 0;
      if (in >> kb) return kb * 1024;
    }
  }
  return std::nullopt;
}

std::string render_bench_text(const BenchReport& r) {
  std::ostringstream out;
  out << "input_size        " << r.input_h << "x" << r.input_w << "\n"
      << "threads           " << r.threads << "\n"
      << "warmup_iters      " << r.warmup_iters << "\n"
      << "measured_iters    " << r.measured_iters << "\n"
      << "mean_ms           " << fmt("%.3f", r.mean_ms) << "\n"
      << "p50_ms            " << fmt("%.3f", r.p50_ms) << "\n"
      << "p95_ms            " << fmt("%.3f", r.p95_ms) << "\n"
      << "fps               " << fmt("%.2f", r.fps) << "\n"
      << "peak_tensor_bytes " << r.peak_tensor_bytes << " ("
      << fmt("%.2f", static_cast<double>(r.peak_tensor_bytes) / (1024.0 * 1024.0)) << " MiB, modeled)\n"
      << "checksum          " << std::hex << r.checksum << std::dec
      << (r.checksum_stable ? "" : " (UNSTABLE)") << "\n";
  if (r.peak_rss_bytes) {
    out << "peak_rss_bytes    " << *r.peak_rss_bytes << " (process VmHWM, not comparable to the modeled figure)\n";
  }
  return out.str();
}

std::string render_bench_csv(const BenchReport& r) {
  std::ostringstream out;
  out << "input_size,threads,warmup_iters,measured_iters,mean_ms,p50_ms,p95_ms,fps,peak_tensor_bytes,"
         "per_iter_ms\n";
  out << r.input_h << "x" << r.input_w << ',' << r.threads << ',' << r.warmup_iters << ','
      << r.measured_iters << ',' << fmt("%.6f", r.mean_ms) << ',' << fmt("%.6f", r.p50_ms) << ','
      << fmt("%.6f", r.p95_ms) << ',' << fmt("%.6f", r.fps) << ',' << r.peak_tensor_bytes << ',';
  for (std::size_t i = 0; i < r.per_iter_ms.size(); ++i) {
    out << (i ? ";" : "") << fmt("%.6f", r.per_iter_ms[i]);
  }
  out << '\n';
  return out.str();
}

std::string render_bench_json(const BenchReport& r) {
  nlohmann::json j;
  j["input_size"] = {r.input_h, r.input_w};
  j["threads"] = r.threads;
  j["warmup_iters"] = r.warmup_iters;
  j["measured_iters"] = r.measured_iters;
  j["per_iter_ms"] = r.per_iter_ms;
  j["mean_ms"] = r.mean_ms;
  j["p50_ms"] = r.p50_ms;
  j["p95_ms"] = r.p95_ms;
  j["fps"] = r.fps;
  j["peak_tensor_bytes"] = r.peak_tensor_bytes;
  j["checksum"] = r.checksum;
  j["checksum_stable"] = r.checksum_stable;
  if (r.peak_rss_bytes) j["peak_rss_bytes"] = *r.peak_rss_bytes;
  return j.dump(2) + "\n";
}

}  // namespace biseunet
