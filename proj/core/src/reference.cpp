#include "biseunet/reference.hpp"

#include <cmath>

#include "biseunet/errors.hpp"

namespace biseunet::reference {

std::vector<double> conv2d(const Tensor& x, const ConvSpec& s, std::span<const float> weights,
                           std::span<const float> bias, std::vector<double>* magnitude) {
  s.validate();
  if (x.c() != s.in_channels || weights.size() != s.weight_count()) {
    throw InvalidArgument("reference::conv2d: shape mismatch");
  }
  const auto [oh, ow] = s.output_hw(x.h(), x.w());
  const std::size_t cin_g = s.in_channels / s.groups;
  const std::size_t cout_g = s.out_channels / s.groups;
  std::vector<double> out(x.n() * s.out_channels * oh * ow);
  if (magnitude) magnitude->assign(out.size(), 0.0);

  std::size_t idx = 0;
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
      const std::size_t grp = oc / cout_g;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox, ++idx) {
          double acc = bias.empty() ? 0.0 : bias[oc];
          double mag = std::abs(acc);
          for (std::size_t ci = 0; ci < cin_g; ++ci) {
            for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
              const long iy = static_cast<long>(oy * s.stride_h + ky) - static_cast<long>(s.pad_h);
              if (iy < 0 || iy >= static_cast<long>(x.h())) continue;
              for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
                const long ix =
                    static_cast<long>(ox * s.stride_w + kx) - static_cast<long>(s.pad_w);
                if (ix < 0 || ix >= static_cast<long>(x.w())) continue;
                const double w =
                    weights[((oc * cin_g + ci) * s.kernel_h + ky) * s.kernel_w + kx];
                const double v = x.at(b, grp * cin_g + ci, static_cast<std::size_t>(iy),
                                      static_cast<std::size_t>(ix));
                acc += w * v;
                mag += std::abs(w * v);
              }
            }
          }
          out[idx] = acc;
          if (magnitude) (*magnitude)[idx] = mag;
        }
      }
    }
  }
  return out;
}

}  // namespace biseunet::reference
