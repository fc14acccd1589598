#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "biseunet/tensor.hpp"

namespace biseunet {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t groups = 1;
  bool has_bias = false;

  static ConvSpec square(std::size_t in, std::size_t out, std::size_t k, std::size_t stride,
                         std::size_t pad, std::size_t groups = 1, bool bias = false) {
    return {in, out, k, k, stride, stride, pad, pad, groups, bias};
  }

  bool is_depthwise() const noexcept {
    return groups > 1 && groups == in_channels && groups == out_channels;
  }
  bool is_pointwise() const noexcept {
    return groups == 1 && kernel_h == 1 && kernel_w == 1 && stride_h == 1 && stride_w == 1 &&
           pad_h == 0 && pad_w == 0;
  }
  std::size_t weight_count() const noexcept {
    return out_channels * (in_channels / groups) * kernel_h * kernel_w;
  }

  // Throws InvalidArgument on group divisibility or zero extents.
  void validate() const;
  // Floor formula; throws InvalidGeometry when the result would be < 1.
  std::pair<std::size_t, std::size_t> output_hw(std::size_t h, std::size_t w) const;
};

// Inference-mode batch norm parameters. epsilon defaults to 1e-5.
struct BnParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon = 1e-5f;

  static BnParams identity(std::size_t channels, float epsilon = 1e-5f);
  std::size_t channels() const noexcept { return gamma.size(); }
  // Throws InvalidArgument unless all vectors have `channels` entries, var >= 0 and eps > 0.
  void validate(std::size_t channels) const;
};

// Intra-op thread count for the parallel kernels (OpenMP). 0 restores the default.
void set_num_threads(int threads);
int num_threads();

// Direct convolution with zero padding. weights: [out, in/groups, kh, kw]; bias empty or [out].
Tensor conv2d(const Tensor& x, const ConvSpec& spec, std::span<const float> weights,
              std::span<const float> bias = {});

Tensor batchnorm_infer(Tensor x, const BnParams& bn);

// Returns (weights', bias') so that conv(x, w', b') == bn(conv(x, w, b)). An empty
// input bias is treated as zero.
std::pair<std::vector<float>, std::vector<float>> fold_bn_into_conv(std::span<const float> weights,
                                                                    std::span<const float> bias,
                                                                    const BnParams& bn);

Tensor relu(Tensor x);
Tensor sigmoid(Tensor x);
float sigmoid(float v);

// Mean over H*W per (batch, channel), accumulated in double.
Tensor global_avg_pool(const Tensor& x);

// Bilinear resize with half-pixel centers, source coordinates clamped to the image.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Channels [begin, end) of x.
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);

Tensor elementwise_add(const Tensor& a, const Tensor& b);
// x[b,c,:,:] * gate[b,c,0,0]
Tensor channel_scale(const Tensor& x, const Tensor& gate);

}  // namespace biseunet
