#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "biseunet/kernels.hpp"
#include "biseunet/model_config.hpp"

namespace biseunet {

enum class OpKind {
  kInput,
  kConv,
  kBatchNorm,
  kRelu,
  kSigmoid,
  kGlobalAvgPool,
  kResize,
  kConcat,
  kAdd,
  kChannelScale,
};

// One operation in a per-sample dataflow graph. Extents exclude the batch dimension.
struct Node {
  std::string name;  // layer path for conv / batch-norm nodes
  OpKind op = OpKind::kInput;
  std::vector<std::size_t> inputs;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  ConvSpec conv{};  // kConv only

  std::size_t numel() const noexcept { return c * h * w; }
};

// Append-only DAG; node ids are insertion indices, so insertion order is a valid schedule.
class Graph {
 public:
  std::size_t input(std::string name, std::size_t c, std::size_t h, std::size_t w);
  std::size_t conv(std::string name, std::size_t in, const ConvSpec& spec);
  std::size_t batchnorm(std::string name, std::size_t in);
  std::size_t relu(std::string name, std::size_t in);
  std::size_t sigmoid(std::string name, std::size_t in);
  std::size_t global_avg_pool(std::string name, std::size_t in);
  std::size_t resize(std::string name, std::size_t in, std::size_t h, std::size_t w);
  std::size_t concat(std::string name, std::size_t a, std::size_t b);
  std::size_t add(std::string name, std::size_t a, std::size_t b);
  std::size_t channel_scale(std::string name, std::size_t x, std::size_t gate);

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t output() const { return nodes_.size() - 1; }
  std::size_t find(const std::string& name) const;  // throws InvalidArgument

  std::vector<std::size_t> insertion_order() const;
  // Throws InvalidArgument unless `order` is a permutation of all nodes respecting edges.
  void check_schedule(std::span<const std::size_t> order) const;

 private:
  std::size_t push(Node n);
  std::vector<Node> nodes_;
};

// The full BiSe-UNet topology for cfg, in execution order. Final node: logits at input size.
Graph build_model_graph(const ModelConfig& cfg);

// Maximum concurrently live activation bytes (4 bytes/element) when executing `order`.
// A tensor is allocated when produced and freed right after its last consumer runs; the
// graph output is never freed.
std::uint64_t peak_activation_bytes(const Graph& g, std::span<const std::size_t> order,
                                    std::size_t batch = 1);

}  // namespace biseunet
