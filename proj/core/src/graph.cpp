#include "biseunet/graph.hpp"

#include <algorithm>

#include "biseunet/errors.hpp"

namespace biseunet {

std::size_t Graph::push(Node n) {
  for (std::size_t in : n.inputs) {
    if (in >= nodes_.size()) throw InvalidArgument("graph node '" + n.name + "' has a dangling input");
  }
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

std::size_t Graph::input(std::string name, std::size_t c, std::size_t h, std::size_t w) {
  return push({std::move(name), OpKind::kInput, {}, c, h, w, {}});
}

std::size_t Graph::conv(std::string name, std::size_t in, const ConvSpec& spec) {
  const Node& src = node(in);
  spec.validate();
  if (spec.in_channels != src.c) {
    throw LayerError(name, "expects " + std::to_string(spec.in_channels) + " input channels, got " +
                               std::to_string(src.c));
  }
  const auto [oh, ow] = spec.output_hw(src.h, src.w);
  return push({std::move(name), OpKind::kConv, {in}, spec.out_channels, oh, ow, spec});
}

std::size_t Graph::batchnorm(std::string name, std::size_t in) {
  const Node& s = node(in);
  return push({std::move(name), OpKind::kBatchNorm, {in}, s.c, s.h, s.w, {}});
}

std::size_t Graph::relu(std::string name, std::size_t in) {
  const Node& s = node(in);
  return push({std::move(name), OpKind::kRelu, {in}, s.c, s.h, s.w, {}});
}

std::size_t Graph::sigmoid(std::string name, std::size_t in) {
  const Node& s = node(in);
  return push({std::move(name), OpKind::kSigmoid, {in}, s.c, s.h, s.w, {}});
}

std::size_t Graph::global_avg_pool(std::string name, std::size_t in) {
  return push({std::move(name), OpKind::kGlobalAvgPool, {in}, node(in).c, 1, 1, {}});
}

std::size_t Graph::resize(std::string name, std::size_t in, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw InvalidGeometry("resize '" + name + "' to an empty size");
  return push({std::move(name), OpKind::kResize, {in}, node(in).c, h, w, {}});
}

std::size_t Graph::concat(std::string name, std::size_t a, std::size_t b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.h != nb.h || na.w != nb.w) {
    throw InvalidArgument("concat '" + name + "': spatial sizes differ");
  }
  return push({std::move(name), OpKind::kConcat, {a, b}, na.c + nb.c, na.h, na.w, {}});
}

std::size_t Graph::add(std::string name, std::size_t a, std::size_t b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.c != nb.c || na.h != nb.h || na.w != nb.w) {
    throw InvalidArgument("add '" + name + "': shapes differ");
  }
  return push({std::move(name), OpKind::kAdd, {a, b}, na.c, na.h, na.w, {}});
}

std::size_t Graph::channel_scale(std::string name, std::size_t x, std::size_t gate) {
  const Node& nx = node(x);
  const Node& ng = node(gate);
  if (ng.c != nx.c || ng.h != 1 || ng.w != 1) {
    throw InvalidArgument("channel_scale '" + name + "': gate shape mismatch");
  }
  return push({std::move(name), OpKind::kChannelScale, {x, gate}, nx.c, nx.h, nx.w, {}});
}

std::size_t Graph::find(const std::string& name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name == name) return i;
  }
  throw InvalidArgument("graph has no node named '" + name + "'");
}

std::vector<std::size_t> Graph::insertion_order() const {
  std::vector<std::size_t> order(nodes_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return order;
}

void Graph::check_schedule(std::span<const std::size_t> order) const {
  if (order.size() != nodes_.size()) throw InvalidArgument("schedule does not cover every node");
  std::vector<bool> done(nodes_.size(), false);
  for (std::size_t id : order) {
    if (id >= nodes_.size() || done[id]) throw InvalidArgument("schedule is not a permutation");
    for (std::size_t in : nodes_[id].inputs) {
      if (!done[in]) {
        throw InvalidArgument("schedule runs '" + nodes_[id].name + "' before its input '" +
                              nodes_[in].name + "'");
      }
    }
    done[id] = true;
  }
}

namespace {

struct Builder {
  Graph& g;

  std::size_t conv_bn(const std::string& conv, const std::string& bn, std::size_t in,
                      const ConvSpec& spec) {
    return g.batchnorm(bn, g.conv(conv, in, spec));
  }
  std::size_t conv_bn_relu(const std::string& prefix, const std::string& conv,
                           const std::string& bn, const std::string& act, std::size_t in,
                           const ConvSpec& spec) {
    return g.relu(prefix + act, conv_bn(prefix + conv, prefix + bn, in, spec));
  }
  std::size_t c(std::size_t id) const { return g.node(id).c; }
  std::size_t h(std::size_t id) const { return g.node(id).h; }
  std::size_t w(std::size_t id) const { return g.node(id).w; }

  std::size_t arm(const std::string& p, std::size_t in) {
    const std::size_t ch = c(in);
    const std::size_t local =
        conv_bn_relu(p, "conv", "bn", "relu", in, ConvSpec::square(ch, ch, 3, 1, 1));
    const std::size_t pooled = g.global_avg_pool(p + "gap", local);
    const std::size_t gate = g.sigmoid(
        p + "sigmoid", conv_bn(p + "gate_conv", p + "gate_bn", pooled, ConvSpec::square(ch, ch, 1, 1, 0)));
    return g.channel_scale(p + "scale", local, gate);
  }

  std::size_t dsconv(const std::string& p, std::size_t in, std::size_t out) {
    const std::size_t ch = c(in);
    const std::size_t dw =
        conv_bn_relu(p, "dw", "dw_bn", "dw_relu", in, ConvSpec::square(ch, ch, 3, 1, 1, ch));
    return conv_bn_relu(p, "pw", "pw_bn", "pw_relu", dw, ConvSpec::square(ch, out, 1, 1, 0));
  }
};

}  // namespace

Graph build_model_graph(const ModelConfig& cfg) {
  cfg.validate();
  Graph g;
  Builder b{g};
  const std::size_t x = g.input("input", cfg.in_channels, cfg.input_h, cfg.input_w);

  // Context Path: five stages of (3x3 s2 ConvBNReLU, 3x3 s1 ConvBNReLU).
  std::size_t stage_out[5];
  std::size_t cur = x;
  for (std::size_t s = 0; s < 5; ++s) {
    const std::string p = "cp.stage" + std::to_string(s + 1) + ".";
    const std::size_t width = cfg.cp_widths[s];
    cur = b.conv_bn_relu(p, "conv1", "bn1", "relu1", cur, ConvSpec::square(b.c(cur), width, 3, 2, 1));
    cur = b.conv_bn_relu(p, "conv2", "bn2", "relu2", cur, ConvSpec::square(width, width, 3, 1, 1));
    stage_out[s] = cur;
  }
  const std::size_t f4 = stage_out[1];
  const std::size_t f8 = stage_out[2];
  const std::size_t arm16 = b.arm("cp.arm16.", stage_out[3]);
  const std::size_t f32 = b.arm("cp.arm32.", stage_out[4]);

  // Global-context head merged additively into ARM(/16).
  const std::size_t gc_pool = g.global_avg_pool("cp.gc.gap", f32);
  const std::size_t gc = b.conv_bn("cp.gc.conv", "cp.gc.bn", gc_pool,
                                   ConvSpec::square(b.c(f32), b.c(f32), 1, 1, 0));
  const std::size_t gc_up = g.resize("cp.gc.upsample", gc, b.h(arm16), b.w(arm16));
  const std::size_t gc_proj = g.conv("cp.gc.proj", gc_up,
                                     ConvSpec::square(b.c(f32), b.c(arm16), 1, 1, 0, 1, true));
  const std::size_t f16_ref = g.add("cp.gc.merge", arm16, gc_proj);

  // Spatial Path.
  cur = x;
  const std::size_t sp_k[3] = {7, 3, 3};
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string p = "sp.stage" + std::to_string(s + 1) + ".";
    cur = b.conv_bn_relu(p, "conv", "bn", "relu", cur,
                         ConvSpec::square(b.c(cur), cfg.sp_widths[s], sp_k[s], 2, sp_k[s] / 2));
  }
  const std::size_t s8 = g.conv("sp.proj", cur,
                                ConvSpec::square(b.c(cur), cfg.sp_proj_channels, 1, 1, 0, 1, true));

  // Single /8 fusion: x'8 = ReLU(BN(Conv1x1([x8 || s8]))).
  const std::size_t cat8 = g.concat("fuse.concat", f8, s8);
  const std::size_t x8p = b.conv_bn_relu("fuse.", "conv", "bn", "relu", cat8,
                                         ConvSpec::square(b.c(cat8), cfg.fuse8_channels, 1, 1, 0));

  // Decoder.
  const std::size_t skips[3] = {f16_ref, x8p, f4};
  cur = f32;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string p = "dec.block" + std::to_string(i + 1) + ".";
    const std::size_t up = g.resize("dec.up" + std::to_string(i + 1), cur, b.h(skips[i]), b.w(skips[i]));
    const std::size_t cat = g.concat("dec.concat" + std::to_string(i + 1), up, skips[i]);
    cur = b.dsconv(p, cat, cfg.decoder_widths[i]);
  }
  const std::size_t up4 = g.resize("dec.up4", cur, 2 * b.h(cur), 2 * b.w(cur));
  const std::size_t head =
      g.conv("head.conv", up4, ConvSpec::square(b.c(up4), cfg.num_classes, 1, 1, 0, 1, true));
  g.resize("head.resize", head, cfg.input_h, cfg.input_w);
  return g;
}

std::uint64_t peak_activation_bytes(const Graph& g, std::span<const std::size_t> order,
                                    std::size_t batch) {
  g.check_schedule(order);
  const auto& nodes = g.nodes();
  std::vector<std::size_t> position(nodes.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) position[order[pos]] = pos;

  constexpr std::size_t kNever = static_cast<std::size_t>(-1);
  std::vector<std::size_t> last_use(nodes.size(), kNever);
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    for (std::size_t in : nodes[id].inputs) {
      last_use[in] = last_use[in] == kNever ? position[id] : std::max(last_use[in], position[id]);
    }
  }
  last_use[g.output()] = order.size();

  auto bytes = [&](std::size_t id) {
    return static_cast<std::uint64_t>(nodes[id].numel()) * batch * sizeof(float);
  };
  std::uint64_t live = 0;
  std::uint64_t peak = 0;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const std::size_t id = order[pos];
    live += bytes(id);
    peak = std::max(peak, live);
    if (last_use[id] == kNever) live -= bytes(id);
    std::vector<std::size_t> ins = nodes[id].inputs;
    std::sort(ins.begin(), ins.end());
    ins.erase(std::unique(ins.begin(), ins.end()), ins.end());
    for (std::size_t in : ins) {
      if (last_use[in] == pos) live -= bytes(in);
    }
  }
  return peak;
}

}  // namespace biseunet
