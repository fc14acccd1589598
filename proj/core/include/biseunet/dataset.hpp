#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "biseunet/image_io.hpp"
#include "biseunet/rng.hpp"
#include "biseunet/tensor.hpp"

namespace biseunet {

struct SamplePair {
  std::string stem;
  std::filesystem::path image_path;
  std::filesystem::path mask_path;

  bool operator==(const SamplePair&) const = default;
};

struct PairingResult {
  std::vector<SamplePair> pairs;              // sorted by stem (byte order)
  std::vector<std::filesystem::path> skipped;  // unmatched files from either side, sorted
};

// Pairs regular files by filename stem. Throws IoError if a directory is unreadable.
PairingResult pair_dataset(const std::filesystem::path& images_dir,
                           const std::filesystem::path& masks_dir);

// One path per line.
std::string skip_log(const PairingResult& result);

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

enum class SplitSection { kTrain, kVal, kTest };
SplitSection parse_split_section(const std::string& name);  // throws InvalidArgument

struct DatasetSplit {
  std::vector<SamplePair> train;
  std::vector<SamplePair> val;
  std::vector<SamplePair> test;
  std::uint64_t seed = 0;

  const std::vector<SamplePair>& section(SplitSection s) const;
};

// Sorts by stem, Fisher-Yates shuffles with SplitMix64(seed) (for i = N-1..1, j = below(i+1)),
// then slices floor(train*N), floor(val*N) and the remainder. Throws InvalidArgument on empty
// input or ratios not summing to 1.
DatasetSplit split_dataset(std::vector<SamplePair> pairs, std::uint64_t seed, SplitRatios ratios = {});

// "[train]", "[val]", "[test]" headers, one stem per line.
std::string split_manifest(const DatasetSplit& split);

inline constexpr std::array<float, 3> kImageNetMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kImageNetStd{0.229f, 0.224f, 0.225f};

// RGB (gray is replicated) -> bilinear resize -> /255 -> (v - mean) / std. Shape 1x3xHxW.
Tensor image_to_tensor(const Image8& image, std::size_t out_h, std::size_t out_w);
Tensor load_image_normalized(const std::filesystem::path& path, std::size_t out_h, std::size_t out_w);

// Gray (RGB collapsed by Rec.601 luma) -> nearest resize -> value > 127 ? 1 : 0. Shape 1x1xHxW.
Tensor mask_to_tensor(const Image8& image, std::size_t out_h, std::size_t out_w);
Tensor load_mask(const std::filesystem::path& path, std::size_t out_h, std::size_t out_w);

enum class AugmentOp { kHFlip, kVFlip, kRot90, kRot180, kRot270, kJitter };

struct Augmentation {
  AugmentOp op = AugmentOp::kHFlip;
  float brightness = 0.0f;  // jitter only, in normalized units
  float contrast = 1.0f;    // jitter only
};

// Flips and rotations (counter-clockwise) permute image and mask identically; jitter touches the
// image only: y = clamp(mean_c + (x - mean_c) * contrast + brightness) within the normalized
// range of channel c. Throws InvalidArgument when image and mask are not spatially aligned.
std::pair<Tensor, Tensor> augment(const Tensor& image, const Tensor& mask, const Augmentation& aug);

struct AugmentConfig {
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double p_rotate = 0.5;  // picks 90/180/270 uniformly
  double p_jitter = 0.5;
  float brightness_max = 0.1f;  // b in [-max, max]
  float contrast_min = 0.8f;
  float contrast_max = 1.2f;
};

// key = value lines using the field names above. Throws ConfigError.
AugmentConfig parse_augment_config(const std::string& text);

std::vector<Augmentation> sample_augmentations(const AugmentConfig& cfg, SplitMix64& rng);

}  // namespace biseunet
