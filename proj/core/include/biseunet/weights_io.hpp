#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "biseunet/model_config.hpp"
#include "biseunet/weights.hpp"

namespace biseunet {

// BSUW container, all integers little-endian:
//   "BSUW" | u32 version=1 | u32 tensor_count |
//   per tensor: u16 name_len | name (UTF-8) | u8 dtype (0=f32) | u8 ndim | u32 dims[ndim] | f32 data
inline constexpr std::uint32_t kWeightFileVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  bool operator==(const NamedTensor&) const = default;
};

std::vector<std::uint8_t> encode_tensor_file(std::span<const NamedTensor> tensors);
// Throws FormatError / UnsupportedDtype on malformed content, IoError (with offset) on truncation.
std::vector<NamedTensor> decode_tensor_file(std::span<const std::uint8_t> bytes);

void write_tensor_file(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path);

// Conv layers map to "<path>.weight" [out, in/g, kh, kw] and "<path>.bias" [out];
// batch norms to "<path>.gamma|beta|running_mean|running_var" [C].
std::vector<NamedTensor> weights_to_tensors(const BlockWeights& weights);
BlockWeights weights_from_tensors(const std::vector<NamedTensor>& tensors, const ModelConfig& cfg);

void save_weights(const BlockWeights& weights, const std::filesystem::path& path);
// Validates every entry against cfg; throws LayerError naming the offending layer.
BlockWeights load_weights(const std::filesystem::path& path, const ModelConfig& cfg);

}  // namespace biseunet
