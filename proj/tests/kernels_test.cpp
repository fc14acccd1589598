#include "biseunet/kernels.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "biseunet/errors.hpp"
#include "test_util.hpp"

namespace biseunet {
namespace {

using testing::max_rel_diff;
using testing::random_tensor;
using testing::random_vector;

// Quadruple-loop direct convolution accumulated in double. Also returns sum |w*x| + |b| per
// element, the scale against which float rounding is judged.
std::vector<double> naive_conv(const Tensor& x, const ConvSpec& s, const std::vector<float>& w,
                               const std::vector<float>& b, std::vector<double>& scale) {
  const std::size_t oh = (x.h() + 2 * s.pad_h - s.kernel_h) / s.stride_h + 1;
  const std::size_t ow = (x.w() + 2 * s.pad_w - s.kernel_w) / s.stride_w + 1;
  const std::size_t cin_g = s.in_channels / s.groups, cout_g = s.out_channels / s.groups;
  std::vector<double> out(x.n() * s.out_channels * oh * ow);
  scale.assign(out.size(), 0.0);
  std::size_t idx = 0;
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t oc = 0; oc < s.out_channels; ++oc)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx, ++idx) {
          double acc = b.empty() ? 0.0 : b[oc];
          double mag = b.empty() ? 0.0 : std::abs(b[oc]);
          const std::size_t g = oc / cout_g;
          for (std::size_t ic = 0; ic < cin_g; ++ic)
            for (std::size_t ky = 0; ky < s.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
                const long iy = static_cast<long>(y * s.stride_h + ky) - static_cast<long>(s.pad_h);
                const long ix = static_cast<long>(xx * s.stride_w + kx) - static_cast<long>(s.pad_w);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(x.h()) || ix >= static_cast<long>(x.w())) continue;
                const double wv = w[((oc * cin_g + ic) * s.kernel_h + ky) * s.kernel_w + kx];
                const double xv = x.at(n, g * cin_g + ic, iy, ix);
                acc += wv * xv;
                mag += std::abs(wv * xv);
              }
          out[idx] = acc;
          scale[idx] = mag;
        }
  return out;
}

ConvSpec random_spec(std::mt19937_64& rng, int family) {
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  ConvSpec s;
  switch (family) {
    case 0:  // dense
      s.in_channels = pick(1, 16);
      s.out_channels = pick(1, 16);
      break;
    case 1:  // depthwise
      s.in_channels = s.out_channels = s.groups = pick(1, 16);
      break;
    case 2:  // pointwise
      s.in_channels = pick(1, 16);
      s.out_channels = pick(1, 16);
      break;
    default:  // grouped
      s.groups = pick(2, 4);
      s.in_channels = s.groups * pick(1, 4);
      s.out_channels = s.groups * pick(1, 4);
  }
  if (family != 2) {
    s.kernel_h = pick(1, 7);
    s.kernel_w = pick(1, 7);
    s.stride_h = pick(1, 3);
    s.stride_w = pick(1, 3);
    s.pad_h = pick(0, s.kernel_h / 2);
    s.pad_w = pick(0, s.kernel_w / 2);
  }
  s.has_bias = pick(0, 1) == 1;
  return s;
}

TEST(Conv2d, OracleEquivalenceRandomized) {
  std::mt19937_64 rng(20240601);
  for (int i = 0; i < 160; ++i) {
    const ConvSpec s = random_spec(rng, i % 4);
    const Shape shape{std::uniform_int_distribution<std::size_t>(1, 2)(rng), s.in_channels,
                      std::uniform_int_distribution<std::size_t>(s.kernel_h, 16)(rng),
                      std::uniform_int_distribution<std::size_t>(s.kernel_w, 16)(rng)};
    const Tensor x = random_tensor(shape, rng);
    const auto w = random_vector(s.weight_count(), rng);
    const auto b = s.has_bias ? random_vector(s.out_channels, rng) : std::vector<float>{};
    const Tensor y = conv2d(x, s, w, b);
    std::vector<double> scale;
    const auto ref = naive_conv(x, s, w, b, scale);
    ASSERT_EQ(y.size(), ref.size()) << "case " << i;
    for (std::size_t k = 0; k < ref.size(); ++k) {
      ASSERT_LE(std::abs(y.data()[k] - ref[k]), 1e-5 * scale[k] + 1e-12) << "case " << i << " elem " << k;
    }
  }
}

TEST(Conv2d, PointwiseIdentityLeavesInputUnchanged) {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({2, 5, 7, 6}, rng);
  std::vector<float> w(25, 0.0f);
  for (int c = 0; c < 5; ++c) w[c * 5 + c] = 1.0f;
  const Tensor y = conv2d(x, ConvSpec::square(5, 5, 1, 1, 0, 1, true), w, std::vector<float>(5, 0.0f));
  EXPECT_EQ(y, x);
}

TEST(Conv2d, OnesKernelOnOnesInput) {
  const Tensor x({1, 1, 3, 3}, 1.0f);
  const Tensor y = conv2d(x, ConvSpec::square(1, 1, 3, 1, 1), std::vector<float>(9, 1.0f));
  const std::vector<float> expect{4, 6, 4, 6, 9, 6, 4, 6, 4};
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()), expect);
}

TEST(Conv2d, StrideTwoOutputShape) {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({1, 3, 4, 4}, rng);
  const ConvSpec s = ConvSpec::square(3, 8, 3, 2, 1);
  const Tensor y = conv2d(x, s, random_vector(s.weight_count(), rng));
  EXPECT_EQ(y.shape(), (Shape{1, 8, 2, 2}));
}

TEST(Conv2d, ShapeAlgebraAcrossRandomSpecs) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 60; ++i) {
    const ConvSpec s = random_spec(rng, i % 4);
    const std::size_t h = std::uniform_int_distribution<std::size_t>(s.kernel_h, 12)(rng);
    const std::size_t w = std::uniform_int_distribution<std::size_t>(s.kernel_w, 12)(rng);
    const Tensor x = random_tensor({1, s.in_channels, h, w}, rng);
    const Tensor y = conv2d(x, s, random_vector(s.weight_count(), rng),
                            s.has_bias ? random_vector(s.out_channels, rng) : std::vector<float>{});
    EXPECT_EQ(y.h(), (h + 2 * s.pad_h - s.kernel_h) / s.stride_h + 1);
    EXPECT_EQ(y.w(), (w + 2 * s.pad_w - s.kernel_w) / s.stride_w + 1);
    EXPECT_EQ(y.c(), s.out_channels);
  }
}

TEST(Conv2d, Linearity) {
  std::mt19937_64 rng(4);
  const ConvSpec s = ConvSpec::square(6, 7, 3, 1, 1);
  const auto w = random_vector(s.weight_count(), rng);
  const Tensor a = random_tensor({1, 6, 9, 9}, rng);
  const Tensor b = random_tensor({1, 6, 9, 9}, rng);
  const float alpha = 0.7f, beta = -1.3f;
  Tensor mix(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) mix.data()[i] = alpha * a.data()[i] + beta * b.data()[i];
  const Tensor lhs = conv2d(mix, s, w);
  const Tensor ya = conv2d(a, s, w), yb = conv2d(b, s, w);
  Tensor rhs(lhs.shape());
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs.data()[i] = alpha * ya.data()[i] + beta * yb.data()[i];
  EXPECT_LE(max_rel_diff(lhs, rhs), 1e-4);
}

TEST(Conv2d, DepthwiseDeltaIsIdentity) {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({2, 9, 10, 13}, rng);
  std::vector<float> w(9 * 9, 0.0f);
  for (int c = 0; c < 9; ++c) w[c * 9 + 4] = 1.0f;
  const Tensor y = conv2d(x, ConvSpec::square(9, 9, 3, 1, 1, 9), w);
  EXPECT_LE(testing::max_abs_diff(y, x), 1e-6);
}

TEST(Conv2d, DeterministicAndThreadIndependent) {
  std::mt19937_64 rng(6);
  const ConvSpec s = ConvSpec::square(16, 32, 3, 1, 1);
  const auto w = random_vector(s.weight_count(), rng);
  const Tensor x = random_tensor({1, 16, 33, 31}, rng);
  set_num_threads(1);
  const Tensor one = conv2d(x, s, w);
  EXPECT_EQ(conv2d(x, s, w), one);
  set_num_threads(4);
  const Tensor four = conv2d(x, s, w);
  set_num_threads(0);
  EXPECT_EQ(four, one);
}

TEST(Conv2d, Errors) {
  const Tensor x({1, 3, 4, 4});
  const ConvSpec s = ConvSpec::square(4, 8, 3, 1, 1);
  EXPECT_THROW(conv2d(x, s, std::vector<float>(s.weight_count())), InvalidArgument);
  const ConvSpec ok = ConvSpec::square(3, 8, 3, 1, 1);
  EXPECT_THROW(conv2d(x, ok, std::vector<float>(5)), InvalidArgument);
  EXPECT_THROW(conv2d(x, ok, std::vector<float>(ok.weight_count()), std::vector<float>(8)), InvalidArgument);
  const ConvSpec big = ConvSpec::square(3, 2, 7, 1, 0);
  EXPECT_THROW(conv2d(x, big, std::vector<float>(big.weight_count())), InvalidGeometry);
  ConvSpec bad_groups = ConvSpec::square(3, 8, 3, 1, 1, 2);
  EXPECT_THROW(bad_groups.validate(), InvalidArgument);
}

TEST(BatchNorm, IdentityParameters) {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({1, 3, 5, 5}, rng);
  EXPECT_EQ(batchnorm_infer(x, BnParams::identity(3, 0.0f)), x);
}

TEST(BatchNorm, AffineArithmetic) {
  BnParams bn = BnParams::identity(2, 0.0f);
  bn.gamma = {2.0f, 2.0f};
  bn.beta = {1.0f, 1.0f};
  const Tensor y = batchnorm_infer(Tensor({1, 2, 3, 3}, 3.0f), bn);
  for (float v : y.data()) EXPECT_EQ(v, 7.0f);
}

TEST(BatchNorm, ScalarOracle) {
  std::mt19937_64 rng(8);
  const Tensor x = random_tensor({2, 4, 6, 6}, rng);
  BnParams bn;
  bn.gamma = random_vector(4, rng);
  bn.beta = random_vector(4, rng);
  bn.running_mean = random_vector(4, rng);
  for (int c = 0; c < 4; ++c) bn.running_var.push_back(0.1f + std::abs(random_vector(1, rng)[0]));
  const Tensor y = batchnorm_infer(x, bn);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t i = 0; i < 36; ++i) {
        const double ref = static_cast<double>(bn.gamma[c]) * (x.plane(n, c)[i] - static_cast<double>(bn.running_mean[c])) /
                               std::sqrt(static_cast<double>(bn.running_var[c]) + bn.epsilon) + bn.beta[c];
        EXPECT_NEAR(y.plane(n, c)[i], ref, 1e-5 * std::max(1.0, std::abs(ref)));
      }
}

TEST(BatchNorm, LengthMismatch) {
  EXPECT_THROW(batchnorm_infer(Tensor({1, 3, 2, 2}), BnParams::identity(2)), InvalidArgument);
  BnParams neg = BnParams::identity(1);
  neg.running_var[0] = -1.0f;
  EXPECT_THROW(batchnorm_infer(Tensor({1, 1, 2, 2}), neg), InvalidArgument);
}

TEST(FoldBn, IdentityKeepsWeights) {
  std::mt19937_64 rng(9);
  const auto w = random_vector(4 * 2 * 9, rng);
  const auto b = random_vector(4, rng);
  const auto [wf, bf] = fold_bn_into_conv(w, b, BnParams::identity(4, 0.0f));
  EXPECT_EQ(wf, w);
  EXPECT_EQ(bf, b);
}

TEST(FoldBn, GammaScalesThrough) {
  std::mt19937_64 rng(10);
  const auto w = random_vector(3 * 9, rng);
  BnParams bn = BnParams::identity(3, 0.0f);
  bn.gamma = {2.0f, 2.0f, 2.0f};
  const auto [wf, bf] = fold_bn_into_conv(w, {}, bn);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(wf[i], 2.0f * w[i]);
  for (float v : bf) EXPECT_EQ(v, 0.0f);
}

TEST(FoldBn, FoldedMatchesUnfolded) {
  std::mt19937_64 rng(11);
  const ConvSpec s = ConvSpec::square(4, 5, 3, 1, 1, 1, true);
  const Tensor x = random_tensor({1, 4, 8, 8}, rng);
  const auto w = random_vector(s.weight_count(), rng);
  const auto b = random_vector(5, rng);
  BnParams bn;
  bn.gamma = random_vector(5, rng);
  bn.beta = random_vector(5, rng);
  bn.running_mean = random_vector(5, rng);
  for (int c = 0; c < 5; ++c) bn.running_var.push_back(0.2f + std::abs(random_vector(1, rng)[0]));
  const auto [wf, bf] = fold_bn_into_conv(w, b, bn);
  EXPECT_LE(max_rel_diff(conv2d(x, s, wf, bf), batchnorm_infer(conv2d(x, s, w, b), bn)), 1e-5);
  EXPECT_THROW(fold_bn_into_conv(w, b, BnParams::identity(4)), InvalidArgument);
}

TEST(Activations, Relu) {
  const Tensor y = relu(Tensor({1, 1, 1, 3}, {-1.0f, 0.0f, 2.0f}));
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()), (std::vector<float>{0, 0, 2}));
}

TEST(Activations, SigmoidSymmetry) {
  EXPECT_EQ(sigmoid(0.0f), 0.5f);
  std::mt19937_64 rng(12);
  for (float v : random_vector(1000, rng, 10.0f)) EXPECT_NEAR(sigmoid(v) + sigmoid(-v), 1.0f, 1e-6);
  EXPECT_EQ(sigmoid(-200.0f), 0.0f);
  EXPECT_EQ(sigmoid(200.0f), 1.0f);
}

TEST(GlobalAvgPool, ConstantAndMean) {
  const Tensor c = global_avg_pool(Tensor({1, 2, 5, 3}, 0.375f));
  EXPECT_EQ(c.shape(), (Shape{1, 2, 1, 1}));
  EXPECT_EQ(c.data()[0], 0.375f);
  EXPECT_EQ(global_avg_pool(Tensor({1, 1, 2, 2}, {1, 2, 3, 4})).data()[0], 2.5f);
}

TEST(GlobalAvgPool, ScalarOracle) {
  std::mt19937_64 rng(13);
  const Tensor x = random_tensor({2, 8, 16, 16}, rng);
  const Tensor y = global_avg_pool(x);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 8; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 256; ++i) acc += x.plane(n, c)[i];
      acc /= 256.0;
      EXPECT_NEAR(y.at(n, c, 0, 0), acc, 1e-6 * std::max(1.0, std::abs(acc)));
    }
}

TEST(BilinearResize, IdentitySize) {
  std::mt19937_64 rng(14);
  const Tensor x = random_tensor({1, 3, 7, 5}, rng);
  EXPECT_EQ(bilinear_resize(x, 7, 5), x);
}

TEST(BilinearResize, ConstantExtension) {
  const Tensor y = bilinear_resize(Tensor({1, 1, 1, 1}, 3.25f), 4, 4);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  for (float v : y.data()) EXPECT_EQ(v, 3.25f);
}

double oracle_sample(const Tensor& x, std::size_t c, std::size_t i, std::size_t j, std::size_t oh, std::size_t ow) {
  const double sy = std::clamp((i + 0.5) * static_cast<double>(x.h()) / oh - 0.5, 0.0, x.h() - 1.0);
  const double sx = std::clamp((j + 0.5) * static_cast<double>(x.w()) / ow - 0.5, 0.0, x.w() - 1.0);
  const std::size_t y0 = static_cast<std::size_t>(sy), x0 = static_cast<std::size_t>(sx);
  const std::size_t y1 = std::min(y0 + 1, x.h() - 1), x1 = std::min(x0 + 1, x.w() - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * x.at(0, c, y0, x0) + fx * x.at(0, c, y0, x1)) +
         fy * ((1 - fx) * x.at(0, c, y1, x0) + fx * x.at(0, c, y1, x1));
}

TEST(BilinearResize, CoordinateFormulaOracle) {
  const Tensor x({1, 1, 2, 2}, {0, 1, 2, 3});
  const Tensor y = bilinear_resize(x, 4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y.at(0, 0, i, j), oracle_sample(x, 0, i, j, 4, 4), 1e-6);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 0), 0.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 1, 1), 0.75f);
}

TEST(BilinearResize, RandomDownAndUp) {
  std::mt19937_64 rng(15);
  const Tensor x = random_tensor({1, 2, 9, 11}, rng);
  for (auto [oh, ow] : {std::pair<std::size_t, std::size_t>{4, 5}, {20, 17}, {1, 1}, {9, 3}}) {
    const Tensor y = bilinear_resize(x, oh, ow);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j)
          EXPECT_NEAR(y.at(0, c, i, j), oracle_sample(x, c, i, j, oh, ow), 1e-5);
  }
}

TEST(Concat, ChannelsAndRoundTrip) {
  std::mt19937_64 rng(16);
  const Tensor a = random_tensor({1, 2, 4, 4}, rng);
  const Tensor b = random_tensor({1, 3, 4, 4}, rng);
  const Tensor ab = concat_channels(a, b);
  EXPECT_EQ(ab.shape(), (Shape{1, 5, 4, 4}));
  EXPECT_EQ(slice_channels(ab, 0, 2), a);
  EXPECT_EQ(slice_channels(ab, 2, 5), b);
  EXPECT_THROW(concat_channels(a, Tensor({1, 3, 4, 5})), InvalidArgument);
  EXPECT_THROW(concat_channels(a, Tensor({2, 3, 4, 4})), InvalidArgument);
}

TEST(Elementwise, AddAndScale) {
  std::mt19937_64 rng(17);
  const Tensor x = random_tensor({2, 2, 3, 3}, rng);
  EXPECT_EQ(elementwise_add(x, Tensor(x.shape(), 0.0f)), x);
  EXPECT_EQ(channel_scale(x, Tensor({2, 2, 1, 1}, 1.0f)), x);
  const Tensor s = channel_scale(Tensor({1, 2, 3, 3}, 1.0f), Tensor({1, 2, 1, 1}, {0.5f, 2.0f}));
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(s.plane(0, 0)[i], 0.5f);
    EXPECT_EQ(s.plane(0, 1)[i], 2.0f);
  }
  EXPECT_THROW(elementwise_add(x, Tensor({2, 2, 3, 4})), InvalidArgument);
  EXPECT_THROW(channel_scale(x, Tensor({2, 3, 1, 1})), InvalidArgument);
}

}  // namespace
}  // namespace biseunet
