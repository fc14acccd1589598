#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace biseunet {

// 8-bit image with interleaved channels (1 = gray, 3 = RGB), row-major.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t ch) const {
    return pixels[(y * width + x) * channels + ch];
  }
};

// Decodes PNG or JPEG (detected by signature). Throws DecodeError.
Image8 read_image(const std::filesystem::path& path);

// Throws IoError.
void write_png(const std::filesystem::path& path, const Image8& image);
void write_jpeg(const std::filesystem::path& path, const Image8& image, int quality = 95);

}  // namespace biseunet
