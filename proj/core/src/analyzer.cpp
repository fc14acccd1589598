#include "biseunet/analyzer.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace biseunet {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kDepthwise: return "depthwise";
    case LayerKind::kPointwise: return "pointwise";
    case LayerKind::kBn: return "bn";
    case LayerKind::kResize: return "resize";
    case LayerKind::kPool: return "pool";
    case LayerKind::kActivation: return "activation";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kAdd: return "add";
  }
  return "unknown";
}

LayerReport count_layer(const ConvSpec& spec, std::size_t out_h, std::size_t out_w, bool bn_present,
                        std::string layer_path) {
  spec.validate();
  const std::uint64_t per_out = (spec.in_channels / spec.groups) * spec.kernel_h * spec.kernel_w;
  const std::uint64_t out = spec.out_channels;
  LayerReport r;
  r.layer_path = std::move(layer_path);
  if (spec.is_depthwise()) {
    r.kind = LayerKind::kDepthwise;
  } else if (spec.groups == 1 && spec.kernel_h == 1 && spec.kernel_w == 1) {
    r.kind = LayerKind::kPointwise;
  } else {
    r.kind = LayerKind::kConv;
  }
  r.out_shape = {1, spec.out_channels, out_h, out_w};
  r.params = out * per_out + (spec.has_bias ? out : 0) + (bn_present ? 2 * out : 0);
  r.macs = out * out_h * out_w * per_out;
  return r;
}

CostReport analyze_graph(const Graph& g) {
  CostReport report;
  const Node& in = g.node(0);
  report.input_h = in.h;
  report.input_w = in.w;
  for (const Node& n : g.nodes()) {
    LayerReport r;
    r.layer_path = n.name;
    r.out_shape = {1, n.c, n.h, n.w};
    switch (n.op) {
      case OpKind::kInput:
        continue;
      case OpKind::kConv:
        r = count_layer(n.conv, n.h, n.w, false, n.name);
        break;
      case OpKind::kBatchNorm:
        r.kind = LayerKind::kBn;
        r.params = 2 * static_cast<std::uint64_t>(n.c);
        break;
      case OpKind::kRelu:
      case OpKind::kSigmoid:
      case OpKind::kChannelScale:
        r.kind = LayerKind::kActivation;
        break;
      case OpKind::kGlobalAvgPool:
        r.kind = LayerKind::kPool;
        break;
      case OpKind::kResize:
        r.kind = LayerKind::kResize;
        break;
      case OpKind::kConcat:
        r.kind = LayerKind::kConcat;
        break;
      case OpKind::kAdd:
        r.kind = LayerKind::kAdd;
        break;
    }
    report.total_params += r.params;
    report.total_macs += r.macs;
    report.layers.push_back(std::move(r));
  }
  return report;
}

CostReport analyze_model(const ModelConfig& cfg) { return analyze_graph(build_model_graph(cfg)); }

std::string render_cost_text(const CostReport& report) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-28s %-11s %-18s %12s %16s\n", "layer", "kind", "out_shape",
                "params", "macs");
  out << line;
  for (const LayerReport& r : report.layers) {
    std::snprintf(line, sizeof(line), "%-28s %-11s %-18s %12llu %16llu\n", r.layer_path.c_str(),
                  std::string(to_string(r.kind)).c_str(), r.out_shape.str().c_str(),
                  static_cast<unsigned long long>(r.params), static_cast<unsigned long long>(r.macs));
    out << line;
  }
  std::snprintf(line, sizeof(line), "input %zux%zu: %llu params (%.3f M), %llu MACs (%.3f G)\n",
                report.input_h, report.input_w, static_cast<unsigned long long>(report.total_params),
                static_cast<double>(report.total_params) / 1e6,
                static_cast<unsigned long long>(report.total_macs),
                static_cast<double>(report.total_macs) / 1e9);
  out << line;
  return out.str();
}

std::string render_cost_csv(const CostReport& report) {
  std::ostringstream out;
  out << "layer,kind,out_shape,params,macs\n";
  for (const LayerReport& r : report.layers) {
    out << r.layer_path << ',' << to_string(r.kind) << ',' << r.out_shape.str() << ',' << r.params
        << ',' << r.macs << '\n';
  }
  return out.str();
}

std::string render_cost_json(const CostReport& report) {
  nlohmann::json j;
  j["input_size"] = {report.input_h, report.input_w};
  j["total_params"] = report.total_params;
  j["total_macs"] = report.total_macs;
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const LayerReport& r : report.layers) {
    layers.push_back({{"layer", r.layer_path},
                      {"kind", to_string(r.kind)},
                      {"out_shape", {r.out_shape.n, r.out_shape.c, r.out_shape.h, r.out_shape.w}},
                      {"params", r.params},
                      {"macs", r.macs}});
  }
  return j.dump(2) + "\n";
}

}  // namespace biseunet
