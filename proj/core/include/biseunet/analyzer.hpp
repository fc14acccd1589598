#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "biseunet/graph.hpp"
#include "biseunet/kernels.hpp"
#include "biseunet/model_config.hpp"
#include "biseunet/tensor.hpp"

namespace biseunet {

enum class LayerKind { kConv, kDepthwise, kPointwise, kBn, kResize, kPool, kActivation, kConcat, kAdd };

std::string_view to_string(LayerKind kind);

struct LayerReport {
  std::string layer_path;
  LayerKind kind = LayerKind::kConv;
  Shape out_shape;
  std::uint64_t params = 0;
  std::uint64_t macs = 0;
};

struct CostReport {
  std::vector<LayerReport> layers;
  std::uint64_t total_params = 0;
  std::uint64_t total_macs = 0;
  std::size_t input_h = 0;
  std::size_t input_w = 0;
};

// Counting convention:
//   params = out*(in/g)*kh*kw + (bias ? out : 0) + (bn ? 2*out : 0)
//   macs   = out*H_out*W_out*(in/g)*kh*kw
// BN running statistics are not trainable and are not counted.
LayerReport count_layer(const ConvSpec& spec, std::size_t out_h, std::size_t out_w, bool bn_present,
                        std::string layer_path = {});

// Walks every node of g; conv and BN nodes carry params, only conv nodes carry MACs.
CostReport analyze_graph(const Graph& g);
// Throws ConfigError for an invalid cfg.
CostReport analyze_model(const ModelConfig& cfg);

std::string render_cost_text(const CostReport& report);
// Header: layer,kind,out_shape,params,macs
std::string render_cost_csv(const CostReport& report);
std::string render_cost_json(const CostReport& report);

}  // namespace biseunet
