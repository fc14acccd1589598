#include "biseunet/tensor.hpp"

#include <cstring>

#include "biseunet/errors.hpp"

namespace biseunet {

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
         std::to_string(w);
}

namespace {

void check_extents(const Shape& s) {
  if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) {
    throw InvalidArgument("tensor extents must all be >= 1, got " + s.str());
  }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
  check_extents(shape_);
  data_.assign(shape_.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != shape_.numel()) {
    throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_.str());
  }
}

std::uint64_t checksum(const Tensor& t) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (float v : t.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 4; ++i) {
      hash ^= (bits >> (8 * i)) & 0xffu;
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

}  // namespace biseunet
