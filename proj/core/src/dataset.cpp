#include "biseunet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "biseunet/errors.hpp"
#include "biseunet/kernels.hpp"

namespace fs = std::filesystem;

namespace biseunet {

namespace {

std::map<std::string, fs::path> list_by_stem(const fs::path& dir, std::vector<fs::path>& dupes) {
  std::map<std::string, fs::path> out;
  std::error_code ec;
  fs::directory_iterator it(dir, ec);
  if (ec) throw IoError("cannot read directory '" + dir.string() + "': " + ec.message());
  for (const auto& entry : it) {
    if (!entry.is_regular_file()) continue;
    const std::string stem = entry.path().stem().string();
    auto [pos, inserted] = out.emplace(stem, entry.path());
    if (!inserted) {
      // Two files share a stem (a.jpg, a.png): keep the byte-order smaller path, skip the other.
      if (entry.path() < pos->second) std::swap(pos->second, dupes.emplace_back(entry.path()));
      else dupes.push_back(entry.path());
    }
  }
  return out;
}

}  // namespace

PairingResult pair_dataset(const fs::path& images_dir, const fs::path& masks_dir) {
  PairingResult result;
  const auto images = list_by_stem(images_dir, result.skipped);
  const auto masks = list_by_stem(masks_dir, result.skipped);
  for (const auto& [stem, path] : images) {
    auto m = masks.find(stem);
    if (m == masks.end()) {
      result.skipped.push_back(path);
    } else {
      result.pairs.push_back({stem, path, m->second});
    }
  }
  for (const auto& [stem, path] : masks) {
    if (!images.contains(stem)) result.skipped.push_back(path);
  }
  std::sort(result.skipped.begin(), result.skipped.end());
  return result;
}

std::string skip_log(const PairingResult& result) {
  std::string out;
  for (const auto& p : result.skipped) out += p.string() + "\n";
  return out;
}

SplitSection parse_split_section(const std::string& name) {
  if (name == "train") return SplitSection::kTrain;
  if (name == "val") return SplitSection::kVal;
  if (name == "test") return SplitSection::kTest;
  throw InvalidArgument("unknown split section '" + name + "' (train, val, test)");
}

const std::vector<SamplePair>& DatasetSplit::section(SplitSection s) const {
  switch (s) {
    case SplitSection::kTrain: return train;
    case SplitSection::kVal: return val;
    case SplitSection::kTest: return test;
  }
  return test;
}

DatasetSplit split_dataset(std::vector<SamplePair> pairs, std::uint64_t seed, SplitRatios ratios) {
  if (pairs.empty()) throw InvalidArgument("split_dataset: no pairs to split");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw InvalidArgument("split_dataset: ratios must be non-negative and sum to 1");
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const SamplePair& a, const SamplePair& b) { return a.stem < b.stem; });
  SplitMix64 rng(seed);
  for (std::size_t i = pairs.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(pairs[i], pairs[j]);
  }
  const double n = static_cast<double>(pairs.size());
  // The epsilon keeps exact products such as 0.7 * 1000 from flooring to 699.
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * n + 1e-9));

  DatasetSplit split;
  split.seed = seed;
  auto it = pairs.begin();
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  it += static_cast<std::ptrdiff_t>(n_train);
  split.val.assign(it, it + static_cast<std::ptrdiff_t>(n_val));
  it += static_cast<std::ptrdiff_t>(n_val);
  split.test.assign(it, pairs.end());
  return split;
}

std::string split_manifest(const DatasetSplit& split) {
  std::ostringstream out;
  const std::pair<const char*, const std::vector<SamplePair>*> sections[] = {
      {"[train]", &split.train}, {"[val]", &split.val}, {"[test]", &split.test}};
  for (const auto& [header, list] : sections) {
    out << header << "\n";
    for (const SamplePair& p : *list) out << p.stem << "\n";
  }
  return out.str();
}

Tensor image_to_tensor(const Image8& image, std::size_t out_h, std::size_t out_w) {
  if (image.channels != 1 && image.channels != 3) {
    throw InvalidArgument("image_to_tensor: expected 1 or 3 channels");
  }
  Tensor raw({1, 3, image.height, image.width});
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const std::size_t src_ch = image.channels == 1 ? 0 : ch;
    float* dst = raw.plane(0, ch);
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) {
        dst[y * image.width + x] = static_cast<float>(image.at(y, x, src_ch));
      }
    }
  }
  Tensor out = bilinear_resize(raw, out_h, out_w);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    float* p = out.plane(0, ch);
    for (std::size_t i = 0; i < out_h * out_w; ++i) {
      p[i] = (p[i] / 255.0f - kImageNetMean[ch]) / kImageNetStd[ch];
    }
  }
  return out;
}

Tensor load_image_normalized(const fs::path& path, std::size_t out_h, std::size_t out_w) {
  return image_to_tensor(read_image(path), out_h, out_w);
}

Tensor mask_to_tensor(const Image8& image, std::size_t out_h, std::size_t out_w) {
  if (image.channels != 1 && image.channels != 3) {
    throw InvalidArgument("mask_to_tensor: expected 1 or 3 channels");
  }
  auto gray = [&](std::size_t y, std::size_t x) -> double {
    if (image.channels == 1) return image.at(y, x, 0);
    return 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
  };
  Tensor out({1, 1, out_h, out_w});
  for (std::size_t i = 0; i < out_h; ++i) {
    const std::size_t sy = std::min(image.height - 1, (2 * i + 1) * image.height / (2 * out_h));
    for (std::size_t j = 0; j < out_w; ++j) {
      const std::size_t sx = std::min(image.width - 1, (2 * j + 1) * image.width / (2 * out_w));
      out.at(0, 0, i, j) = gray(sy, sx) > 127.0 ? 1.0f : 0.0f;
    }
  }
  return out;
}

Tensor load_mask(const fs::path& path, std::size_t out_h, std::size_t out_w) {
  return mask_to_tensor(read_image(path), out_h, out_w);
}

namespace {

// Maps every output pixel to a source pixel; out_h/out_w are the output extents.
template <typename F>
Tensor remap(const Tensor& t, std::size_t out_h, std::size_t out_w, F src) {
  Tensor out({t.n(), t.c(), out_h, out_w});
  for (std::size_t b = 0; b < t.n(); ++b) {
    for (std::size_t ch = 0; ch < t.c(); ++ch) {
      for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
          const auto [sy, sx] = src(y, x);
          out.at(b, ch, y, x) = t.at(b, ch, sy, sx);
        }
      }
    }
  }
  return out;
}

Tensor geometric(const Tensor& t, AugmentOp op) {
  const std::size_t h = t.h();
  const std::size_t w = t.w();
  using P = std::pair<std::size_t, std::size_t>;
  switch (op) {
    case AugmentOp::kHFlip:
      return remap(t, h, w, [&](std::size_t y, std::size_t x) { return P{y, w - 1 - x}; });
    case AugmentOp::kVFlip:
      return remap(t, h, w, [&](std::size_t y, std::size_t x) { return P{h - 1 - y, x}; });
    case AugmentOp::kRot180:
      return remap(t, h, w, [&](std::size_t y, std::size_t x) { return P{h - 1 - y, w - 1 - x}; });
    case AugmentOp::kRot90:  // counter-clockwise: out is w x h
      return remap(t, w, h, [&](std::size_t y, std::size_t x) { return P{x, w - 1 - y}; });
    case AugmentOp::kRot270:
      return remap(t, w, h, [&](std::size_t y, std::size_t x) { return P{h - 1 - x, y}; });
    case AugmentOp::kJitter:
      break;
  }
  return t;
}

}  // namespace

std::pair<Tensor, Tensor> augment(const Tensor& image, const Tensor& mask, const Augmentation& aug) {
  if (image.n() != mask.n() || image.h() != mask.h() || image.w() != mask.w()) {
    throw InvalidArgument("augment: image " + image.shape().str() + " and mask " +
                          mask.shape().str() + " are not aligned");
  }
  if (aug.op != AugmentOp::kJitter) return {geometric(image, aug.op), geometric(mask, aug.op)};

  Tensor out = image;
  const std::size_t area = image.h() * image.w();
  for (std::size_t b = 0; b < image.n(); ++b) {
    for (std::size_t ch = 0; ch < image.c(); ++ch) {
      float* p = out.plane(b, ch);
      double sum = 0.0;
      for (std::size_t i = 0; i < area; ++i) sum += p[i];
      const auto mean = static_cast<float>(sum / static_cast<double>(area));
      const std::size_t k = ch % 3;
      const float lo = (0.0f - kImageNetMean[k]) / kImageNetStd[k];
      const float hi = (1.0f - kImageNetMean[k]) / kImageNetStd[k];
      if (aug.contrast == 1.0f && aug.brightness == 0.0f) continue;
      for (std::size_t i = 0; i < area; ++i) {
        p[i] = std::clamp(mean + (p[i] - mean) * aug.contrast + aug.brightness, lo, hi);
      }
    }
  }
  return {std::move(out), mask};
}

AugmentConfig parse_augment_config(const std::string& text) {
  AugmentConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw ConfigError(key, "'" + value + "' is not a number");
    }
    auto prob = [&](double& field) {
      if (v < 0.0 || v > 1.0) throw ConfigError(key, "probability must be in [0, 1]");
      field = v;
    };
    if (key == "p_hflip") prob(cfg.p_hflip);
    else if (key == "p_vflip") prob(cfg.p_vflip);
    else if (key == "p_rotate") prob(cfg.p_rotate);
    else if (key == "p_jitter") prob(cfg.p_jitter);
    else if (key == "brightness_max") cfg.brightness_max = static_cast<float>(v);
    else if (key == "contrast_min") cfg.contrast_min = static_cast<float>(v);
    else if (key == "contrast_max") cfg.contrast_max = static_cast<float>(v);
    else throw ConfigError(key, "unknown key");
  }
  if (cfg.contrast_min > cfg.contrast_max) throw ConfigError("contrast_min", "exceeds contrast_max");
  if (cfg.brightness_max < 0.0f) throw ConfigError("brightness_max", "must be >= 0");
  return cfg;
}

std::vector<Augmentation> sample_augmentations(const AugmentConfig& cfg, SplitMix64& rng) {
  std::vector<Augmentation> ops;
  if (rng.uniform() < cfg.p_hflip) ops.push_back({AugmentOp::kHFlip});
  if (rng.uniform() < cfg.p_vflip) ops.push_back({AugmentOp::kVFlip});
  if (rng.uniform() < cfg.p_rotate) {
    constexpr AugmentOp rotations[] = {AugmentOp::kRot90, AugmentOp::kRot180, AugmentOp::kRot270};
    ops.push_back({rotations[rng.below(3)]});
  }
  if (rng.uniform() < cfg.p_jitter) {
    Augmentation j{AugmentOp::kJitter};
    j.brightness = static_cast<float>((2.0 * rng.uniform() - 1.0) * cfg.brightness_max);
    j.contrast = static_cast<float>(cfg.contrast_min + rng.uniform() * (cfg.contrast_max - cfg.contrast_min));
    ops.push_back(j);
  }
  return ops;
}

}  // namespace biseunet
