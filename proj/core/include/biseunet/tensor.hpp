#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace biseunet {

// Batch/channel/height/width extents of a dense NCHW tensor.
struct Shape {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t numel() const noexcept { return n * c * h * w; }
  std::size_t plane() const noexcept { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense 4-D float32 tensor, NCHW with width fastest. All extents are >= 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t n() const noexcept { return shape_.n; }
  std::size_t c() const noexcept { return shape_.c; }
  std::size_t h() const noexcept { return shape_.h; }
  std::size_t w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::vector<float>& storage() noexcept { return data_; }

  float* plane(std::size_t b, std::size_t ch) noexcept {
    return data_.data() + (b * shape_.c + ch) * shape_.plane();
  }
  const float* plane(std::size_t b, std::size_t ch) const noexcept {
    return data_.data() + (b * shape_.c + ch) * shape_.plane();
  }

  float& at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) noexcept {
    return data_[((b * shape_.c + ch) * shape_.h + y) * shape_.w + x];
  }
  float at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const noexcept {
    return data_[((b * shape_.c + ch) * shape_.h + y) * shape_.w + x];
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{};
  std::vector<float> data_ = std::vector<float>(1, 0.0f);
};

// FNV-1a over the raw float bytes; used to consume outputs and compare runs.
std::uint64_t checksum(const Tensor& t);

}  // namespace biseunet
