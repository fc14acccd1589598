#pragma once

#include <span>
#include <vector>

#include "biseunet/kernels.hpp"
#include "biseunet/tensor.hpp"

namespace biseunet::reference {

// Naive direct convolution with double accumulation. `magnitude`, when given, receives
// sum(|w*x|) + |b| per output element so callers can bound reassociation error.
std::vector<double> conv2d(const Tensor& x, const ConvSpec& spec, std::span<const float> weights,
                           std::span<const float> bias, std::vector<double>* magnitude = nullptr);

}  // namespace biseunet::reference
