#include "biseunet/weights.hpp"

#include <cmath>
#include <set>

#include "biseunet/errors.hpp"
#include "biseunet/rng.hpp"

namespace biseunet {

namespace {

std::string dims_str(const std::array<std::size_t, 4>& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]) + "x" +
         std::to_string(d[3]);
}

}  // namespace

std::vector<LayerRequirement> required_layers(const Graph& g) {
  std::vector<LayerRequirement> out;
  for (const Node& n : g.nodes()) {
    if (n.op == OpKind::kConv) {
      const ConvSpec& s = n.conv;
      out.push_back({n.name, LayerRequirement::Kind::kConv,
                     {s.out_channels, s.in_channels / s.groups, s.kernel_h, s.kernel_w},
                     s.has_bias, 0});
    } else if (n.op == OpKind::kBatchNorm) {
      out.push_back({n.name, LayerRequirement::Kind::kBatchNorm, {}, false, n.c});
    }
  }
  return out;
}

std::vector<LayerRequirement> required_layers(const ModelConfig& cfg) {
  return required_layers(build_model_graph(cfg));
}

const ConvParams& BlockWeights::conv(std::string_view path) const {
  auto it = convs.find(path);
  if (it == convs.end()) throw LayerError(std::string(path), "missing conv weights");
  return it->second;
}

const BnParams* BlockWeights::bn(std::string_view path) const {
  auto it = bns.find(path);
  return it == bns.end() ? nullptr : &it->second;
}

std::uint64_t BlockWeights::trainable_count() const {
  std::uint64_t n = 0;
  for (const auto& [_, c] : convs) n += c.weight.size() + c.bias.size();
  for (const auto& [_, b] : bns) n += b.gamma.size() + b.beta.size();
  return n;
}

std::uint64_t BlockWeights::scalar_count() const {
  std::uint64_t n = 0;
  for (const auto& [_, c] : convs) n += c.weight.size() + c.bias.size();
  for (const auto& [_, b] : bns) {
    n += b.gamma.size() + b.beta.size() + b.running_mean.size() + b.running_var.size();
  }
  return n;
}

bool BlockWeights::operator==(const BlockWeights& o) const {
  if (convs != o.convs || bns.size() != o.bns.size()) return false;
  for (const auto& [name, b] : bns) {
    const BnParams* ob = o.bn(name);
    if (!ob || b.gamma != ob->gamma || b.beta != ob->beta || b.running_mean != ob->running_mean ||
        b.running_var != ob->running_var || b.epsilon != ob->epsilon) {
      return false;
    }
  }
  return true;
}

void validate_weights(const BlockWeights& weights, const ModelConfig& cfg) {
  std::set<std::string, std::less<>> expected_convs;
  std::set<std::string, std::less<>> expected_bns;
  for (const LayerRequirement& r : required_layers(cfg)) {
    if (r.kind == LayerRequirement::Kind::kConv) {
      expected_convs.insert(r.path);
      const ConvParams& p = weights.conv(r.path);
      if (p.dims != r.dims) {
        throw LayerError(r.path, "weight shape " + dims_str(p.dims) + ", expected " + dims_str(r.dims));
      }
      if (p.weight.size() != r.dims[0] * r.dims[1] * r.dims[2] * r.dims[3]) {
        throw LayerError(r.path, "weight length does not match its shape");
      }
      if (r.has_bias != !p.bias.empty() || (r.has_bias && p.bias.size() != r.dims[0])) {
        throw LayerError(r.path, r.has_bias ? "bias of length " + std::to_string(r.dims[0]) + " required"
                                            : "unexpected bias");
      }
    } else {
      expected_bns.insert(r.path);
      const BnParams* bn = weights.bn(r.path);
      if (!bn) throw LayerError(r.path, "missing batch norm parameters");
      try {
        bn->validate(r.channels);
      } catch (const InvalidArgument& e) {
        throw LayerError(r.path, e.what());
      }
    }
  }
  for (const auto& [name, _] : weights.convs) {
    if (!expected_convs.contains(name)) throw LayerError(name, "orphan conv entry");
  }
  for (const auto& [name, _] : weights.bns) {
    if (!expected_bns.contains(name)) throw LayerError(name, "orphan batch norm entry");
  }
}

BlockWeights init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  BlockWeights w;
  for (const LayerRequirement& r : required_layers(cfg)) {
    if (r.kind == LayerRequirement::Kind::kBatchNorm) {
      w.bns.emplace(r.path, BnParams::identity(r.channels, cfg.bn_epsilon));
      continue;
    }
    ConvParams p;
    p.dims = r.dims;
    const std::size_t fan_in = r.dims[1] * r.dims[2] * r.dims[3];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    NormalSampler normal(seed ^ fnv1a64(r.path));
    p.weight.resize(r.dims[0] * fan_in);
    for (float& v : p.weight) v = static_cast<float>(stddev * normal.next());
    if (r.has_bias) p.bias.assign(r.dims[0], 0.0f);
    w.convs.emplace(r.path, std::move(p));
  }
  return w;
}

BlockWeights fold_batchnorm(const BlockWeights& weights, const ModelConfig& cfg) {
  validate_weights(weights, cfg);
  const Graph g = build_model_graph(cfg);
  BlockWeights out;
  out.convs = weights.convs;
  for (const Node& n : g.nodes()) {
    if (n.op != OpKind::kBatchNorm) continue;
    const Node& producer = g.node(n.inputs.at(0));
    if (producer.op != OpKind::kConv) {
      throw LayerError(n.name, "batch norm does not follow a conv; cannot fold");
    }
    ConvParams& conv = out.convs.at(producer.name);
    auto [w, b] = fold_bn_into_conv(conv.weight, conv.bias, *weights.bn(n.name));
    conv.weight = std::move(w);
    conv.bias = std::move(b);
  }
  return out;
}

}  // namespace biseunet
