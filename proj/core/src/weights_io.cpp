#include "biseunet/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "biseunet/errors.hpp"

namespace biseunet {

namespace {

constexpr char kMagic[4] = {'B', 'S', 'U', 'W'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (b_.size() - pos_ < n) {
      throw IoError("truncated weight file: need " + std::to_string(n) + " bytes", pos_);
    }
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    auto s = take(2);
    return static_cast<std::uint16_t>(s[0] | (s[1] << 8));
  }
  std::uint32_t u32() {
    auto s = take(4);
    return static_cast<std::uint32_t>(s[0]) | (static_cast<std::uint32_t>(s[1]) << 8) |
           (static_cast<std::uint32_t>(s[2]) << 16) | (static_cast<std::uint32_t>(s[3]) << 24);
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::string layer_of(const std::string& name, std::string& suffix) {
  const auto dot = name.rfind('.');
  if (dot == std::string::npos) {
    suffix.clear();
    return name;
  }
  suffix = name.substr(dot + 1);
  return name.substr(0, dot);
}

}  // namespace

std::vector<std::uint8_t> encode_tensor_file(std::span<const NamedTensor> tensors) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kWeightFileVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  std::set<std::string> names;
  for (const NamedTensor& t : tensors) {
    if (!names.insert(t.name).second) throw FormatError("duplicate tensor name '" + t.name + "'");
    if (t.name.size() > 0xffff) throw FormatError("tensor name too long: '" + t.name + "'");
    if (t.dims.size() > 0xff) throw FormatError("tensor '" + t.name + "' has too many dims");
    std::uint64_t count = 1;
    for (auto d : t.dims) count *= d;
    if (count != t.data.size()) {
      throw FormatError("tensor '" + t.name + "' data length does not match its dims");
    }
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(0);
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float v : t.data) w.f32(v);
  }
  return w.take();
}

std::vector<NamedTensor> decode_tensor_file(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError("bad magic (expected BSUW)");
  const std::uint32_t version = r.u32();
  if (version != kWeightFileVersion) {
    throw FormatError("unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint16_t len = r.u16();
    auto name = r.take(len);
    t.name.assign(name.begin(), name.end());
    if (!names.insert(t.name).second) throw FormatError("duplicate tensor name '" + t.name + "'");
    const std::uint8_t dtype = r.u8();
    if (dtype != 0) throw UnsupportedDtype(dtype);
    const std::uint8_t ndim = r.u8();
    std::uint64_t numel = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      t.dims.push_back(r.u32());
      numel *= t.dims.back();
    }
    if (numel * 4 > bytes.size() - r.pos()) {
      throw IoError("truncated weight file: tensor '" + t.name + "' needs " +
                        std::to_string(numel * 4) + " bytes",
                    r.pos());
    }
    t.data.resize(numel);
    for (float& v : t.data) v = std::bit_cast<float>(r.u32());
    out.push_back(std::move(t));
  }
  if (!r.done()) {
    throw FormatError("trailing bytes after " + std::to_string(count) + " tensors at offset " +
                      std::to_string(r.pos()));
  }
  return out;
}

void write_tensor_file(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  const auto bytes = encode_tensor_file(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

std::vector<NamedTensor> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open weight file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_tensor_file(bytes);
}

std::vector<NamedTensor> weights_to_tensors(const BlockWeights& weights) {
  std::vector<NamedTensor> out;
  for (const auto& [path, c] : weights.convs) {
    out.push_back({path + ".weight",
                   {static_cast<std::uint32_t>(c.dims[0]), static_cast<std::uint32_t>(c.dims[1]),
                    static_cast<std::uint32_t>(c.dims[2]), static_cast<std::uint32_t>(c.dims[3])},
                   c.weight});
    if (!c.bias.empty()) {
      out.push_back({path + ".bias", {static_cast<std::uint32_t>(c.bias.size())}, c.bias});
    }
  }
  for (const auto& [path, b] : weights.bns) {
    const auto ch = static_cast<std::uint32_t>(b.channels());
    out.push_back({path + ".gamma", {ch}, b.gamma});
    out.push_back({path + ".beta", {ch}, b.beta});
    out.push_back({path + ".running_mean", {ch}, b.running_mean});
    out.push_back({path + ".running_var", {ch}, b.running_var});
  }
  return out;
}

BlockWeights weights_from_tensors(const std::vector<NamedTensor>& tensors, const ModelConfig& cfg) {
  std::set<std::string, std::less<>> conv_paths;
  std::set<std::string, std::less<>> bn_paths;
  for (const LayerRequirement& r : required_layers(cfg)) {
    (r.kind == LayerRequirement::Kind::kConv ? conv_paths : bn_paths).insert(r.path);
  }

  BlockWeights w;
  for (const NamedTensor& t : tensors) {
    std::string suffix;
    const std::string layer = layer_of(t.name, suffix);
    auto expect_vector = [&] {
      if (t.dims.size() != 1) throw LayerError(layer, "'" + t.name + "' must be one-dimensional");
    };
    if (conv_paths.contains(layer) && suffix == "weight") {
      if (t.dims.size() != 4) throw LayerError(layer, "weight must be 4-dimensional");
      ConvParams& p = w.convs[layer];
      p.dims = {t.dims[0], t.dims[1], t.dims[2], t.dims[3]};
      p.weight = t.data;
    } else if (conv_paths.contains(layer) && suffix == "bias") {
      expect_vector();
      w.convs[layer].bias = t.data;
    } else if (bn_paths.contains(layer) &&
               (suffix == "gamma" || suffix == "beta" || suffix == "running_mean" ||
                suffix == "running_var")) {
      expect_vector();
      BnParams& bn = w.bns[layer];
      bn.epsilon = cfg.bn_epsilon;
      (suffix == "gamma"          ? bn.gamma
       : suffix == "beta"         ? bn.beta
       : suffix == "running_mean" ? bn.running_mean
                                  : bn.running_var) = t.data;
    } else {
      throw LayerError(layer, "tensor '" + t.name + "' does not belong to this model");
    }
  }
  for (const auto& [path, p] : w.convs) {
    if (p.weight.empty()) throw LayerError(path, "bias present without weight");
  }
  validate_weights(w, cfg);
  return w;
}

void save_weights(const BlockWeights& weights, const std::filesystem::path& path) {
  write_tensor_file(path, weights_to_tensors(weights));
}

BlockWeights load_weights(const std::filesystem::path& path, const ModelConfig& cfg) {
  return weights_from_tensors(read_tensor_file(path), cfg);
}

}  // namespace biseunet
