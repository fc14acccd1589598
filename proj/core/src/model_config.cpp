#include "biseunet/model_config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "biseunet/errors.hpp"

namespace biseunet {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::size_t> parse_uints(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw ConfigError(key, "'" + item + "' is not a non-negative integer");
    }
    out.push_back(v);
  }
  return out;
}

template <std::size_t N>
std::array<std::size_t, N> parse_array(const std::string& key, const std::string& value) {
  const auto v = parse_uints(key, value);
  if (v.size() != N) {
    throw ConfigError(key, "expected " + std::to_string(N) + " values, got " +
                               std::to_string(v.size()));
  }
  std::array<std::size_t, N> a{};
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}

std::size_t parse_uint(const std::string& key, const std::string& value) {
  return parse_array<1>(key, value)[0];
}

template <std::size_t N>
std::string join(const std::array<std::size_t, N>& a) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) s += (i ? ", " : "") + std::to_string(a[i]);
  return s;
}

void require_positive(const char* field, std::size_t v) {
  if (v == 0) throw ConfigError(field, "must be >= 1");
}

template <std::size_t N>
void require_positive(const char* field, const std::array<std::size_t, N>& a) {
  for (std::size_t v : a) require_positive(field, v);
}

}  // namespace

void ModelConfig::validate() const {
  require_positive("input_size", input_h);
  require_positive("input_size", input_w);
  if (input_h % 32 != 0 || input_w % 32 != 0) {
    throw ConfigError("input_size", std::to_string(input_h) + "x" + std::to_string(input_w) +
                                        " is not divisible by 32");
  }
  require_positive("in_channels", in_channels);
  require_positive("cp_widths", cp_widths);
  require_positive("sp_widths", sp_widths);
  require_positive("sp_proj_channels", sp_proj_channels);
  require_positive("fuse8_channels", fuse8_channels);
  require_positive("decoder_widths", decoder_widths);
  require_positive("num_classes", num_classes);
  if (!(bn_epsilon >= 0.0f)) throw ConfigError("bn_epsilon", "must be >= 0");
}

ModelConfig ModelConfig::with_input_size(std::size_t h, std::size_t w) const {
  ModelConfig c = *this;
  c.input_h = h;
  c.input_w = w;
  return c;
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(key, "duplicate key");

    if (key == "input_size") {
      const auto v = parse_uints(key, value);
      if (v.size() == 1) {
        cfg.input_h = cfg.input_w = v[0];
      } else if (v.size() == 2) {
        cfg.input_h = v[0];
        cfg.input_w = v[1];
      } else {
        throw ConfigError(key, "expected 'H, W' or a single size");
      }
    } else if (key == "in_channels") {
      cfg.in_channels = parse_uint(key, value);
    } else if (key == "cp_widths") {
      cfg.cp_widths = parse_array<5>(key, value);
    } else if (key == "sp_widths") {
      cfg.sp_widths = parse_array<3>(key, value);
    } else if (key == "sp_proj_channels") {
      cfg.sp_proj_channels = parse_uint(key, value);
    } else if (key == "fuse8_channels") {
      cfg.fuse8_channels = parse_uint(key, value);
    } else if (key == "decoder_widths") {
      cfg.decoder_widths = parse_array<3>(key, value);
    } else if (key == "num_classes") {
      cfg.num_classes = parse_uint(key, value);
    } else if (key == "bn_epsilon") {
      float eps = 0.0f;
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), eps);
      if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError(key, "'" + value + "' is not a number");
      }
      cfg.bn_epsilon = eps;
    } else {
      throw ConfigError(key, "unknown key");
    }
  }
  cfg.validate();
  return cfg;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open model config '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_model_config(ss.str());
}

std::string serialize_model_config(const ModelConfig& cfg) {
  std::ostringstream out;
  out << "input_size = " << cfg.input_h << ", " << cfg.input_w << "\n"
      << "in_channels = " << cfg.in_channels << "\n"
      << "cp_widths = " << join(cfg.cp_widths) << "\n"
      << "sp_widths = " << join(cfg.sp_widths) << "\n"
      << "sp_proj_channels = " << cfg.sp_proj_channels << "\n"
      << "fuse8_channels = " << cfg.fuse8_channels << "\n"
      << "decoder_widths = " << join(cfg.decoder_widths) << "\n"
      << "num_classes = " << cfg.num_classes << "\n";
  char eps[32];
  auto res = std::to_chars(eps, eps + sizeof(eps), cfg.bn_epsilon);
  out << "bn_epsilon = " << std::string(eps, res.ptr) << "\n";
  return out.str();
}

}  // namespace biseunet
