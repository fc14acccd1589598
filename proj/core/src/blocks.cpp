#include "biseunet/blocks.hpp"

#include <string>

#include "biseunet/errors.hpp"
#include "biseunet/kernels.hpp"

namespace biseunet {

namespace {

std::string join(std::string_view prefix, const char* leaf) {
  return std::string(prefix) + "." + leaf;
}

Tensor conv(const Tensor& x, const BlockWeights& w, const std::string& path, std::size_t stride,
            std::size_t pad, std::size_t groups = 1) {
  const ConvParams& p = w.conv(path);
  if (p.dims[1] * groups != x.c()) {
    throw LayerError(path, "expects " + std::to_string(p.dims[1] * groups) +
                               " input channels, got " + std::to_string(x.c()));
  }
  const ConvSpec spec{x.c(),  p.dims[0], p.dims[2], p.dims[3], stride,
                      stride, pad,       pad,       groups,    !p.bias.empty()};
  try {
    return conv2d(x, spec, p.weight, p.bias);
  } catch (const InvalidArgument& e) {
    throw LayerError(path, e.what());
  } catch (const InvalidGeometry& e) {
    throw LayerError(path, e.what());
  }
}

Tensor bn(Tensor x, const BlockWeights& w, const std::string& path) {
  const BnParams* p = w.bn(path);
  if (!p) return x;
  if (p->channels() != x.c()) {
    throw LayerError(path, "has " + std::to_string(p->channels()) + " channels, input has " +
                               std::to_string(x.c()));
  }
  return batchnorm_infer(std::move(x), *p);
}

Tensor conv_bn_relu(const Tensor& x, const BlockWeights& w, std::string_view prefix,
                    const char* conv_leaf, const char* bn_leaf, std::size_t stride,
                    std::size_t pad, std::size_t groups = 1) {
  return relu(bn(conv(x, w, join(prefix, conv_leaf), stride, pad, groups), w, join(prefix, bn_leaf)));
}

void expect_input(const Tensor& x, const ModelConfig& cfg, const char* who) {
  if (x.c() != cfg.in_channels || x.h() != cfg.input_h || x.w() != cfg.input_w) {
    throw InvalidArgument(std::string(who) + ": input " + x.shape().str() + " does not match config " +
                          std::to_string(cfg.in_channels) + "x" + std::to_string(cfg.input_h) + "x" +
                          std::to_string(cfg.input_w));
  }
}

}  // namespace

Tensor arm_forward(const Tensor& f, const BlockWeights& weights, std::string_view prefix) {
  Tensor local = conv_bn_relu(f, weights, prefix, "conv", "bn", 1, 1);
  Tensor gate = global_avg_pool(local);
  gate = bn(conv(gate, weights, join(prefix, "gate_conv"), 1, 0), weights, join(prefix, "gate_bn"));
  return channel_scale(local, sigmoid(std::move(gate)));
}

Tensor global_context_forward(const Tensor& f32_arm, const BlockWeights& weights,
                              std::size_t target_h, std::size_t target_w) {
  Tensor g = global_avg_pool(f32_arm);
  g = bn(conv(g, weights, "cp.gc.conv", 1, 0), weights, "cp.gc.bn");
  g = bilinear_resize(g, target_h, target_w);
  return conv(g, weights, "cp.gc.proj", 1, 0);
}

ContextFeatures context_path_forward(const Tensor& x, const ModelConfig& cfg,
                                     const BlockWeights& weights) {
  expect_input(x, cfg, "context_path_forward");
  Tensor stages[5];
  const Tensor* cur = &x;
  for (std::size_t s = 0; s < 5; ++s) {
    const std::string p = "cp.stage" + std::to_string(s + 1);
    Tensor t = conv_bn_relu(*cur, weights, p, "conv1", "bn1", 2, 1);
    stages[s] = conv_bn_relu(t, weights, p, "conv2", "bn2", 1, 1);
    cur = &stages[s];
  }
  Tensor arm16 = arm_forward(stages[3], weights, "cp.arm16");
  Tensor arm32 = arm_forward(stages[4], weights, "cp.arm32");
  Tensor gc = global_context_forward(arm32, weights, arm16.h(), arm16.w());
  ContextFeatures out;
  out.f4 = std::move(stages[1]);
  out.f8 = std::move(stages[2]);
  out.f16_ref = elementwise_add(arm16, gc);
  out.f32 = std::move(arm32);
  return out;
}

Tensor spatial_path_forward(const Tensor& x, const ModelConfig& cfg, const BlockWeights& weights) {
  expect_input(x, cfg, "spatial_path_forward");
  Tensor t = conv_bn_relu(x, weights, "sp.stage1", "conv", "bn", 2, 3);
  t = conv_bn_relu(t, weights, "sp.stage2", "conv", "bn", 2, 1);
  t = conv_bn_relu(t, weights, "sp.stage3", "conv", "bn", 2, 1);
  return conv(t, weights, "sp.proj", 1, 0);
}

Tensor fuse_spatial(const Tensor& f8, const Tensor& s8, const BlockWeights& weights) {
  return conv_bn_relu(concat_channels(f8, s8), weights, "fuse", "conv", "bn", 1, 0);
}

Tensor dsconv_block(const Tensor& x, const BlockWeights& weights, std::string_view prefix) {
  Tensor t = conv_bn_relu(x, weights, prefix, "dw", "dw_bn", 1, 1, x.c());
  return conv_bn_relu(t, weights, prefix, "pw", "pw_bn", 1, 0);
}

Tensor decoder_forward(const ContextFeatures& ctx, const Tensor& x8p, const ModelConfig& cfg,
                       const BlockWeights& weights) {
  const Tensor* skips[3] = {&ctx.f16_ref, &x8p, &ctx.f4};
  Tensor cur = ctx.f32;
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor up = bilinear_resize(cur, skips[i]->h(), skips[i]->w());
    cur = dsconv_block(concat_channels(up, *skips[i]), weights,
                       "dec.block" + std::to_string(i + 1));
  }
  Tensor head = conv(bilinear_resize(cur, 2 * cur.h(), 2 * cur.w()), weights, "head.conv", 1, 0);
  return bilinear_resize(head, cfg.input_h, cfg.input_w);
}

Tensor model_forward(const Tensor& x, const ModelConfig& cfg, const BlockWeights& weights) {
  const ContextFeatures ctx = context_path_forward(x, cfg, weights);
  const Tensor x8p = fuse_spatial(ctx.f8, spatial_path_forward(x, cfg, weights), weights);
  return decoder_forward(ctx, x8p, cfg, weights);
}

Tensor execute_graph(const Graph& g, std::span<const std::size_t> order, const Tensor& x,
                     const BlockWeights& weights) {
  g.check_schedule(order);
  std::vector<Tensor> values(g.nodes().size());
  for (std::size_t id : order) {
    const Node& n = g.node(id);
    auto in = [&](std::size_t k) -> const Tensor& { return values[n.inputs[k]]; };
    switch (n.op) {
      case OpKind::kInput:
        values[id] = x;
        break;
      case OpKind::kConv:
        values[id] = conv(in(0), weights, n.name, n.conv.stride_h, n.conv.pad_h, n.conv.groups);
        break;
      case OpKind::kBatchNorm:
        values[id] = bn(in(0), weights, n.name);
        break;
      case OpKind::kRelu:
        values[id] = relu(in(0));
        break;
      case OpKind::kSigmoid:
        values[id] = sigmoid(in(0));
        break;
      case OpKind::kGlobalAvgPool:
        values[id] = global_avg_pool(in(0));
        break;
      case OpKind::kResize:
        values[id] = bilinear_resize(in(0), n.h, n.w);
        break;
      case OpKind::kConcat:
        values[id] = concat_channels(in(0), in(1));
        break;
      case OpKind::kAdd:
        values[id] = elementwise_add(in(0), in(1));
        break;
      case OpKind::kChannelScale:
        values[id] = channel_scale(in(0), in(1));
        break;
    }
  }
  return values[g.output()];
}

Model::Model(ModelConfig cfg, BlockWeights weights, bool fold_bn)
    : cfg_(std::move(cfg)), weights_(std::move(weights)) {
  cfg_.validate();
  validate_weights(weights_, cfg_);
  if (fold_bn) weights_ = fold_batchnorm(weights_, cfg_);
}

}  // namespace biseunet
