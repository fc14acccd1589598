#pragma once

#include <span>
#include <string_view>

#include "biseunet/graph.hpp"
#include "biseunet/model_config.hpp"
#include "biseunet/tensor.hpp"
#include "biseunet/weights.hpp"

namespace biseunet {

// Skip tensors exposed by the Context Path.
struct ContextFeatures {
  Tensor f4;       // stage-2 output, /4
  Tensor f8;       // stage-3 output, /8
  Tensor f16_ref;  // ARM(/16) + projected global context
  Tensor f32;      // ARM(/32)
};

// Each forward helper reads weights by layer path and reports mismatches as LayerError.
// A BN entry that is absent (folded weights) is treated as identity.

ContextFeatures context_path_forward(const Tensor& x, const ModelConfig& cfg,
                                     const BlockWeights& weights);

// prefix is the ARM's layer path, e.g. "cp.arm16".
Tensor arm_forward(const Tensor& f, const BlockWeights& weights, std::string_view prefix);

// GAP -> 1x1 conv + BN -> broadcast to target size -> 1x1 projection. The caller adds the
// result to ARM(/16).
Tensor global_context_forward(const Tensor& f32_arm, const BlockWeights& weights,
                              std::size_t target_h, std::size_t target_w);

Tensor spatial_path_forward(const Tensor& x, const ModelConfig& cfg, const BlockWeights& weights);

// x'8 = ReLU(BN(Conv1x1([f8 || s8])))
Tensor fuse_spatial(const Tensor& f8, const Tensor& s8, const BlockWeights& weights);

// ReLU(BN(pw1x1(ReLU(BN(dw3x3(x)))))); prefix e.g. "dec.block1".
Tensor dsconv_block(const Tensor& x, const BlockWeights& weights, std::string_view prefix);

// Returns logits (no sigmoid) at cfg.input_h x cfg.input_w.
Tensor decoder_forward(const ContextFeatures& ctx, const Tensor& x8p, const ModelConfig& cfg,
                       const BlockWeights& weights);

Tensor model_forward(const Tensor& x, const ModelConfig& cfg, const BlockWeights& weights);

// Interprets g node by node in `order`. Used to cross-check model_forward against the graph
// that drives the analyzer and memory model.
Tensor execute_graph(const Graph& g, std::span<const std::size_t> order, const Tensor& x,
                     const BlockWeights& weights);

// A validated (config, weights) pair. Immutable and shareable across threads.
class Model {
 public:
  // Validates weights against cfg; with fold_bn, BN layers are absorbed into the convs.
  Model(ModelConfig cfg, BlockWeights weights, bool fold_bn = false);

  const ModelConfig& config() const noexcept { return cfg_; }
  const BlockWeights& weights() const noexcept { return weights_; }
  Tensor forward(const Tensor& x) const { return model_forward(x, cfg_, weights_); }

 private:
  ModelConfig cfg_;
  BlockWeights weights_;
};

}  // namespace biseunet
