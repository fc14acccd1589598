#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>

namespace biseunet {

// One BiSe-UNet instance. Serialized as `key = value` lines with the field names below.
struct ModelConfig {
  std::size_t input_h = 256;
  std::size_t input_w = 256;
  std::size_t in_channels = 3;
  // Context Path widths at /2, /4, /8, /16, /32.
  std::array<std::size_t, 5> cp_widths{24, 32, 64, 128, 256};
  // Spatial Path stage widths (7x7 s2, 3x3 s2, 3x3 s2).
  std::array<std::size_t, 3> sp_widths{32, 32, 64};
  std::size_t sp_proj_channels = 64;
  std::size_t fuse8_channels = 64;
  // DSConv output widths at the /16, /8 and /4 merges.
  std::array<std::size_t, 3> decoder_widths{128, 64, 32};
  std::size_t num_classes = 1;
  float bn_epsilon = 1e-5f;

  // Throws ConfigError naming the first offending field.
  void validate() const;
  ModelConfig with_input_size(std::size_t h, std::size_t w) const;

  bool operator==(const ModelConfig&) const = default;
};

ModelConfig parse_model_config(const std::string& text);
ModelConfig load_model_config(const std::filesystem::path& path);
std::string serialize_model_config(const ModelConfig& cfg);

}  // namespace biseunet
