#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "biseunet/graph.hpp"
#include "biseunet/kernels.hpp"
#include "biseunet/model_config.hpp"

namespace biseunet {

struct ConvParams {
  std::array<std::size_t, 4> dims{};  // out, in/groups, kh, kw
  std::vector<float> weight;
  std::vector<float> bias;  // empty when the layer has no bias

  bool operator==(const ConvParams&) const = default;
};

// What a graph expects to find for one parameterized layer.
struct LayerRequirement {
  enum class Kind { kConv, kBatchNorm };
  std::string path;
  Kind kind = Kind::kConv;
  std::array<std::size_t, 4> dims{};  // conv only
  bool has_bias = false;              // conv only
  std::size_t channels = 0;           // batch norm only
};

std::vector<LayerRequirement> required_layers(const Graph& g);
std::vector<LayerRequirement> required_layers(const ModelConfig& cfg);

// Parameters of one model keyed by layer path ("cp.stage1.conv1", "cp.stage1.bn1", ...).
// Immutable once loaded; safe to share across threads.
class BlockWeights {
 public:
  std::map<std::string, ConvParams, std::less<>> convs;
  std::map<std::string, BnParams, std::less<>> bns;

  // Throws LayerError when missing.
  const ConvParams& conv(std::string_view path) const;
  // nullptr when absent (e.g. after BN folding).
  const BnParams* bn(std::string_view path) const;

  // Conv weights + biases + BN gamma/beta.
  std::uint64_t trainable_count() const;
  // Every stored float, BN running statistics included.
  std::uint64_t scalar_count() const;

  bool operator==(const BlockWeights&) const;
};

// Throws LayerError naming the first missing, orphaned or mis-shaped layer.
void validate_weights(const BlockWeights& weights, const ModelConfig& cfg);

// He-normal conv weights (std sqrt(2/fan_in)); zero biases; identity BN. Each conv layer draws
// from its own Box-Muller/SplitMix64 stream seeded with seed ^ fnv1a64(layer_path).
BlockWeights init_weights(const ModelConfig& cfg, std::uint64_t seed);

// Absorbs every BN into its producing conv. The result has no BN entries and every
// conv that fed a BN carries a bias.
BlockWeights fold_batchnorm(const BlockWeights& weights, const ModelConfig& cfg);

}  // namespace biseunet
