#include "biseunet/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>

#include "biseunet/errors.hpp"

namespace biseunet {

namespace {

// GEMM blocking: a job owns kTile output pixels of one (batch, group). Its input patch is packed
// into panels of kNr pixels ([panel][k][kNr]); weights are packed once per call into blocks of
// kMr output channels ([block][k][kMr]). K is walked in chunks of kKc so a panel slice and a
// weight block stay cache resident. Every output accumulates in ascending k.
#ifdef __AVX__
constexpr std::size_t kVec = 8;
#else
constexpr std::size_t kVec = 4;
#endif
constexpr std::size_t kNr = 2 * kVec;
constexpr std::size_t kMr = 6;
constexpr std::size_t kKc = 256;
constexpr std::size_t kTile = 128;

int g_default_threads = 0;

std::string dim_str(const char* name, std::size_t got, std::size_t want) {
  return std::string(name) + " is " + std::to_string(got) + ", expected " + std::to_string(want);
}

using vf = float __attribute__((vector_size(kVec * sizeof(float))));

inline vf loadv(const float* p) {
  vf v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void storev(float* p, vf v) { std::memcpy(p, &v, sizeof(v)); }

// c[r][0..kNr) (+)= sum_k w[k][r] * x[k][0..kNr) for r < kMr.
void micro_kernel(const float* w, const float* x, std::size_t kc, float* c, std::size_t ldc,
                  bool first) {
  vf acc[kMr][2];
  for (std::size_t r = 0; r < kMr; ++r) {
    if (first) {
      acc[r][0] = vf{};
      acc[r][1] = vf{};
    } else {
      acc[r][0] = loadv(c + r * ldc);
      acc[r][1] = loadv(c + r * ldc + kVec);
    }
  }
  for (std::size_t k = 0; k < kc; ++k) {
    const vf x0 = loadv(x + k * kNr);
    const vf x1 = loadv(x + k * kNr + kVec);
    const float* wk = w + k * kMr;
    for (std::size_t r = 0; r < kMr; ++r) {
      acc[r][0] += wk[r] * x0;
      acc[r][1] += wk[r] * x1;
    }
  }
  for (std::size_t r = 0; r < kMr; ++r) {
    storev(c + r * ldc, acc[r][0]);
    storev(c + r * ldc + kVec, acc[r][1]);
  }
}

// One input tile as zero-padded panels: dst[panel][k][kNr].
void pack_tile(const Tensor& x, std::size_t b, std::size_t c0, std::size_t cin_g,
               const ConvSpec& s, std::size_t out_w, std::size_t p0, std::size_t np,
               std::size_t k_count, float* dst) {
  const std::size_t panels = (np + kNr - 1) / kNr;
  std::fill(dst, dst + panels * k_count * kNr, 0.0f);
  const auto in_h = static_cast<std::ptrdiff_t>(x.h());
  const auto in_w = static_cast<std::ptrdiff_t>(x.w());
  if (s.is_pointwise()) {
    for (std::size_t ci = 0; ci < cin_g; ++ci) {
      const float* src = x.plane(b, c0 + ci) + p0;
      for (std::size_t j = 0; j < np; ++j) dst[(j / kNr) * k_count * kNr + ci * kNr + j % kNr] = src[j];
    }
    return;
  }
  const auto sh = static_cast<std::ptrdiff_t>(s.stride_h);
  const auto sw = static_cast<std::ptrdiff_t>(s.stride_w);
  const auto ph = static_cast<std::ptrdiff_t>(s.pad_h);
  const auto pw = static_cast<std::ptrdiff_t>(s.pad_w);
  const std::size_t panel_stride = k_count * kNr;
  std::size_t k = 0;
  for (std::size_t ci = 0; ci < cin_g; ++ci) {
    const float* src = x.plane(b, c0 + ci);
    for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(s.kernel_h); ++ky) {
      for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(s.kernel_w); ++kx, ++k) {
        // Valid ox satisfy 0 <= ox*sw - pw + kx < in_w.
        const std::ptrdiff_t ox_lo = pw > kx ? (pw - kx + sw - 1) / sw : 0;
        const std::ptrdiff_t ox_hi = in_w - 1 + pw - kx < 0 ? -1 : (in_w - 1 + pw - kx) / sw;
        float* base = dst + k * kNr;
        std::size_t j = 0;
        auto oy = static_cast<std::ptrdiff_t>(p0 / out_w);
        auto ox0 = static_cast<std::ptrdiff_t>(p0 % out_w);
        while (j < np) {
          const auto run = static_cast<std::ptrdiff_t>(std::min(out_w - ox0, np - j));
          const std::ptrdiff_t iy = oy * sh - ph + ky;
          if (iy >= 0 && iy < in_h) {
            const float* row = src + iy * in_w - pw + kx;
            const std::ptrdiff_t lo = std::max(ox0, ox_lo);
            const std::ptrdiff_t hi = std::min(ox0 + run - 1, ox_hi);
            for (std::ptrdiff_t ox = lo; ox <= hi; ++ox) {
              const std::size_t jj = j + static_cast<std::size_t>(ox - ox0);
              base[(jj / kNr) * panel_stride + jj % kNr] = row[ox * sw];
            }
          }
          j += static_cast<std::size_t>(run);
          ox0 = 0;
          ++oy;
        }
      }
    }
  }
}

void conv_gemm(const Tensor& x, const ConvSpec& s, std::span<const float> weights,
               std::span<const float> bias, Tensor& y) {
  const std::size_t groups = s.groups;
  const std::size_t cin_g = s.in_channels / groups;
  const std::size_t cout_g = s.out_channels / groups;
  const std::size_t k_count = cin_g * s.kernel_h * s.kernel_w;
  const std::size_t pixels = y.h() * y.w();
  const std::size_t tiles = (pixels + kTile - 1) / kTile;
  const std::size_t jobs = x.n() * groups * tiles;
  const std::size_t mblocks = (cout_g + kMr - 1) / kMr;

  // packed[grp][block][k][kMr], rows past cout_g are zero.
  std::vector<float> packed(groups * mblocks * k_count * kMr, 0.0f);
  for (std::size_t grp = 0; grp < groups; ++grp) {
    for (std::size_t oc = 0; oc < cout_g; ++oc) {
      const float* src = weights.data() + (grp * cout_g + oc) * k_count;
      float* dst = packed.data() + ((grp * mblocks + oc / kMr) * k_count) * kMr + oc % kMr;
      for (std::size_t k = 0; k < k_count; ++k) dst[k * kMr] = src[k];
    }
  }

#pragma omp parallel
  {
    std::vector<float> panel(k_count * kTile);
    std::vector<float> acc(mblocks * kMr * kTile);
#pragma omp for schedule(static)
    for (std::ptrdiff_t job = 0; job < static_cast<std::ptrdiff_t>(jobs); ++job) {
      const std::size_t tile = static_cast<std::size_t>(job) % tiles;
      const std::size_t grp = (static_cast<std::size_t>(job) / tiles) % groups;
      const std::size_t b = static_cast<std::size_t>(job) / (tiles * groups);
      const std::size_t p0 = tile * kTile;
      const std::size_t np = std::min(kTile, pixels - p0);
      const std::size_t panels = (np + kNr - 1) / kNr;

      pack_tile(x, b, grp * cin_g, cin_g, s, y.w(), p0, np, k_count, panel.data());
      const float* wgrp = packed.data() + grp * mblocks * k_count * kMr;
      for (std::size_t k0 = 0; k0 < k_count; k0 += kKc) {
        const std::size_t kc = std::min(kKc, k_count - k0);
        for (std::size_t p = 0; p < panels; ++p) {
          const float* xp = panel.data() + (p * k_count + k0) * kNr;
          for (std::size_t m = 0; m < mblocks; ++m) {
            micro_kernel(wgrp + (m * k_count + k0) * kMr, xp, kc,
                         acc.data() + m * kMr * kTile + p * kNr, kTile, k0 == 0);
          }
        }
      }

      for (std::size_t oc = 0; oc < cout_g; ++oc) {
        const std::size_t out_c = grp * cout_g + oc;
        float* dst = y.plane(b, out_c) + p0;
        const float* a = acc.data() + oc * kTile;
        if (bias.empty()) {
          std::copy(a, a + np, dst);
        } else {
          const float bv = bias[out_c];
          for (std::size_t j = 0; j < np; ++j) dst[j] = a[j] + bv;
        }
      }
    }
  }
}

void conv_depthwise(const Tensor& x, const ConvSpec& s, std::span<const float> weights,
                    std::span<const float> bias, Tensor& y) {
  const auto in_h = static_cast<std::ptrdiff_t>(x.h());
  const auto in_w = static_cast<std::ptrdiff_t>(x.w());
  const auto out_w = static_cast<std::ptrdiff_t>(y.w());
  const auto sh = static_cast<std::ptrdiff_t>(s.stride_h);
  const auto sw = static_cast<std::ptrdiff_t>(s.stride_w);
  const auto ph = static_cast<std::ptrdiff_t>(s.pad_h);
  const auto pw = static_cast<std::ptrdiff_t>(s.pad_w);
  const std::size_t taps = s.kernel_h * s.kernel_w;
  const std::size_t planes = x.n() * x.c();

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(planes); ++pi) {
    const std::size_t b = static_cast<std::size_t>(pi) / x.c();
    const std::size_t ch = static_cast<std::size_t>(pi) % x.c();
    const float* src = x.plane(b, ch);
    float* dst = y.plane(b, ch);
    const float* w = weights.data() + ch * taps;
    for (std::size_t oy = 0; oy < y.h(); ++oy) {
      float* out_row = dst + oy * y.w();
      std::fill(out_row, out_row + y.w(), 0.0f);
      for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(s.kernel_h); ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * sh - ph + ky;
        const bool row_valid = iy >= 0 && iy < in_h;
        for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(s.kernel_w); ++kx) {
          const float wv = w[static_cast<std::size_t>(ky) * s.kernel_w + static_cast<std::size_t>(kx)];
          if (!row_valid) continue;
          const float* in_row = src + iy * in_w;
          // Valid ox satisfy 0 <= ox*sw - pw + kx < in_w.
          std::ptrdiff_t lo = 0;
          if (pw > kx) lo = (pw - kx + sw - 1) / sw;
          std::ptrdiff_t hi = (in_w - 1 + pw - kx);
          hi = hi < 0 ? -1 : hi / sw;
          hi = std::min(hi, out_w - 1);
          for (std::ptrdiff_t ox = lo; ox <= hi; ++ox) out_row[ox] += wv * in_row[ox * sw - pw + kx];
        }
      }
      if (!bias.empty()) {
        const float bv = bias[ch];
        for (std::ptrdiff_t ox = 0; ox < out_w; ++ox) out_row[ox] += bv;
      }
    }
  }
}

}  // namespace

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride_h == 0 ||
      stride_w == 0 || groups == 0) {
    throw InvalidArgument("conv spec has a zero extent");
  }
  if (in_channels % groups != 0) {
    throw InvalidArgument("in_channels " + std::to_string(in_channels) +
                          " not divisible by groups " + std::to_string(groups));
  }
  if (out_channels % groups != 0) {
    throw InvalidArgument("out_channels " + std::to_string(out_channels) +
                          " not divisible by groups " + std::to_string(groups));
  }
}

std::pair<std::size_t, std::size_t> ConvSpec::output_hw(std::size_t h, std::size_t w) const {
  const auto span_h = static_cast<std::ptrdiff_t>(h + 2 * pad_h) - static_cast<std::ptrdiff_t>(kernel_h);
  const auto span_w = static_cast<std::ptrdiff_t>(w + 2 * pad_w) - static_cast<std::ptrdiff_t>(kernel_w);
  if (span_h < 0 || span_w < 0) {
    throw InvalidGeometry("conv output would be empty for input " + std::to_string(h) + "x" +
                          std::to_string(w) + " with kernel " + std::to_string(kernel_h) + "x" +
                          std::to_string(kernel_w));
  }
  return {static_cast<std::size_t>(span_h) / stride_h + 1,
          static_cast<std::size_t>(span_w) / stride_w + 1};
}

BnParams BnParams::identity(std::size_t channels, float epsilon) {
  BnParams bn;
  bn.gamma.assign(channels, 1.0f);
  bn.beta.assign(channels, 0.0f);
  bn.running_mean.assign(channels, 0.0f);
  bn.running_var.assign(channels, 1.0f);
  bn.epsilon = epsilon;
  return bn;
}

void BnParams::validate(std::size_t channels) const {
  if (gamma.size() != channels || beta.size() != channels || running_mean.size() != channels ||
      running_var.size() != channels) {
    throw InvalidArgument("batch norm parameters have " + std::to_string(gamma.size()) +
                          " channels, expected " + std::to_string(channels));
  }
  if (!(epsilon >= 0.0f)) throw InvalidArgument("batch norm epsilon must be non-negative");
  for (float v : running_var) {
    if (!(v >= 0.0f)) throw InvalidArgument("batch norm running_var must be >= 0");
    if (v + epsilon <= 0.0f) throw InvalidArgument("batch norm running_var + epsilon must be > 0");
  }
}

void set_num_threads(int threads) {
  if (g_default_threads == 0) g_default_threads = omp_get_max_threads();
  omp_set_num_threads(threads > 0 ? threads : g_default_threads);
}

int num_threads() { return omp_get_max_threads(); }

Tensor conv2d(const Tensor& x, const ConvSpec& spec, std::span<const float> weights,
              std::span<const float> bias) {
  spec.validate();
  if (x.c() != spec.in_channels) {
    throw InvalidArgument("conv2d: input channels " + dim_str("C", x.c(), spec.in_channels));
  }
  if (weights.size() != spec.weight_count()) {
    throw InvalidArgument("conv2d: weight length " +
                          dim_str("", weights.size(), spec.weight_count()));
  }
  if (spec.has_bias && bias.size() != spec.out_channels) {
    throw InvalidArgument("conv2d: bias length " + dim_str("", bias.size(), spec.out_channels));
  }
  if (!spec.has_bias && !bias.empty()) {
    throw InvalidArgument("conv2d: bias supplied but spec.has_bias is false");
  }
  const auto [out_h, out_w] = spec.output_hw(x.h(), x.w());
  Tensor y({x.n(), spec.out_channels, out_h, out_w});
  if (spec.is_depthwise()) {
    conv_depthwise(x, spec, weights, bias, y);
  } else {
    conv_gemm(x, spec, weights, bias, y);
  }
  return y;
}

Tensor batchnorm_infer(Tensor y, const BnParams& bn) {
  bn.validate(y.c());
  const Tensor& x = y;
  for (std::size_t ch = 0; ch < x.c(); ++ch) {
    const float scale = static_cast<float>(
        static_cast<double>(bn.gamma[ch]) /
        std::sqrt(static_cast<double>(bn.running_var[ch]) + static_cast<double>(bn.epsilon)));
    const float mean = bn.running_mean[ch];
    const float beta = bn.beta[ch];
    for (std::size_t b = 0; b < x.n(); ++b) {
      float* p = y.plane(b, ch);
      for (std::size_t i = 0; i < x.h() * x.w(); ++i) p[i] = (p[i] - mean) * scale + beta;
    }
  }
  return y;
}

std::pair<std::vector<float>, std::vector<float>> fold_bn_into_conv(std::span<const float> weights,
                                                                    std::span<const float> bias,
                                                                    const BnParams& bn) {
  const std::size_t out = bn.channels();
  bn.validate(out);
  if (out == 0 || weights.size() % out != 0) {
    throw InvalidArgument("fold_bn_into_conv: weight length " + std::to_string(weights.size()) +
                          " is not a multiple of " + std::to_string(out) + " channels");
  }
  if (!bias.empty() && bias.size() != out) {
    throw InvalidArgument("fold_bn_into_conv: bias length " + dim_str("", bias.size(), out));
  }
  const std::size_t per_out = weights.size() / out;
  std::vector<float> w(weights.size());
  std::vector<float> b(out);
  for (std::size_t oc = 0; oc < out; ++oc) {
    const double scale = static_cast<double>(bn.gamma[oc]) /
                         std::sqrt(static_cast<double>(bn.running_var[oc]) + bn.epsilon);
    for (std::size_t i = 0; i < per_out; ++i) {
      w[oc * per_out + i] = static_cast<float>(weights[oc * per_out + i] * scale);
    }
    const double b0 = bias.empty() ? 0.0 : bias[oc];
    b[oc] = static_cast<float>((b0 - bn.running_mean[oc]) * scale + bn.beta[oc]);
  }
  return {std::move(w), std::move(b)};
}

float sigmoid(float v) {
  if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
  const float e = std::exp(v);
  return e / (1.0f + e);
}

Tensor relu(Tensor x) {
  for (float& v : x.data()) v = v > 0.0f ? v : 0.0f;
  return x;
}

Tensor sigmoid(Tensor x) {
  for (float& v : x.data()) v = sigmoid(v);
  return x;
}

Tensor global_avg_pool(const Tensor& x) {
  Tensor y({x.n(), x.c(), 1, 1});
  const std::size_t area = x.h() * x.w();
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t ch = 0; ch < x.c(); ++ch) {
      const float* p = x.plane(b, ch);
      double sum = 0.0;
      for (std::size_t i = 0; i < area; ++i) sum += p[i];
      y.at(b, ch, 0, 0) = static_cast<float>(sum / static_cast<double>(area));
    }
  }
  return y;
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw InvalidGeometry("bilinear_resize: output size must be >= 1");
  if (out_h == x.h() && out_w == x.w()) return x;

  struct Tap {
    std::size_t i0, i1;
    float frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto i0 = static_cast<std::size_t>(src);
      t[i] = {i0, std::min(i0 + 1, in - 1), static_cast<float>(src - static_cast<double>(i0))};
    }
    return t;
  };
  const std::vector<Tap> ty = taps(x.h(), out_h);
  const std::vector<Tap> tx = taps(x.w(), out_w);

  Tensor y({x.n(), x.c(), out_h, out_w});
  const std::size_t planes = x.n() * x.c();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(planes); ++pi) {
    const std::size_t b = static_cast<std::size_t>(pi) / x.c();
    const std::size_t ch = static_cast<std::size_t>(pi) % x.c();
    const float* src = x.plane(b, ch);
    float* dst = y.plane(b, ch);
    for (std::size_t i = 0; i < out_h; ++i) {
      const float* r0 = src + ty[i].i0 * x.w();
      const float* r1 = src + ty[i].i1 * x.w();
      const float ly = ty[i].frac;
      for (std::size_t j = 0; j < out_w; ++j) {
        const Tap& t = tx[j];
        const float top = (1.0f - t.frac) * r0[t.i0] + t.frac * r0[t.i1];
        const float bot = (1.0f - t.frac) * r1[t.i0] + t.frac * r1[t.i1];
        dst[i * out_w + j] = (1.0f - ly) * top + ly * bot;
      }
    }
  }
  return y;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw InvalidArgument("concat_channels: shapes " + a.shape().str() + " and " +
                          b.shape().str() + " disagree on batch or spatial size");
  }
  Tensor y({a.n(), a.c() + b.c(), a.h(), a.w()});
  const std::size_t pa = a.c() * a.h() * a.w();
  const std::size_t pb = b.c() * b.h() * b.w();
  for (std::size_t n = 0; n < a.n(); ++n) {
    float* dst = y.plane(n, 0);
    std::copy(a.plane(n, 0), a.plane(n, 0) + pa, dst);
    std::copy(b.plane(n, 0), b.plane(n, 0) + pb, dst + pa);
  }
  return y;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin >= end || end > x.c()) {
    throw InvalidArgument("slice_channels: invalid range [" + std::to_string(begin) + ", " +
                          std::to_string(end) + ") for " + std::to_string(x.c()) + " channels");
  }
  Tensor y({x.n(), end - begin, x.h(), x.w()});
  const std::size_t len = (end - begin) * x.h() * x.w();
  for (std::size_t n = 0; n < x.n(); ++n) {
    std::copy(x.plane(n, begin), x.plane(n, begin) + len, y.plane(n, 0));
  }
  return y;
}

Tensor elementwise_add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument("elementwise_add: shape " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor y = a;
  auto dst = y.data();
  auto src = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return y;
}

Tensor channel_scale(const Tensor& x, const Tensor& gate) {
  if (gate.n() != x.n() || gate.c() != x.c() || gate.h() != 1 || gate.w() != 1) {
    throw InvalidArgument("channel_scale: gate " + gate.shape().str() + " does not match " +
                          x.shape().str());
  }
  Tensor y = x;
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t ch = 0; ch < x.c(); ++ch) {
      const float g = gate.at(b, ch, 0, 0);
      float* p = y.plane(b, ch);
      for (std::size_t i = 0; i < x.h() * x.w(); ++i) p[i] *= g;
    }
  }
  return y;
}

}  // namespace biseunet
