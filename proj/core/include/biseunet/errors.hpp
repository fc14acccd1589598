#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace biseunet {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or value precondition violated by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A convolution or resize would produce an empty output.
class InvalidGeometry : public Error {
 public:
  using Error::Error;
};

// A ModelConfig / RunConfig field is missing or invalid.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("config field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// A named layer is missing, orphaned or has the wrong shape.
class LayerError : public Error {
 public:
  LayerError(std::string layer_path, const std::string& what)
      : Error("layer '" + layer_path + "': " + what), layer_path_(std::move(layer_path)) {}
  const std::string& layer_path() const noexcept { return layer_path_; }

 private:
  std::string layer_path_;
};

// Malformed weight file (bad magic, version, dtype, duplicates, trailing bytes).
class FormatError : public Error {
 public:
  using Error::Error;
};

class UnsupportedDtype : public FormatError {
 public:
  explicit UnsupportedDtype(unsigned dtype)
      : FormatError("unsupported dtype " + std::to_string(dtype) + " (only 0 = float32)") {}
};

// File system failure; offset is set when a read ran past the end of a file.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what, std::optional<std::uint64_t> offset = std::nullopt)
      : Error(offset ? what + " at byte offset " + std::to_string(*offset) : what),
        offset_(offset) {}
  std::optional<std::uint64_t> offset() const noexcept { return offset_; }

 private:
  std::optional<std::uint64_t> offset_;
};

class DecodeError : public Error {
 public:
  DecodeError(std::string path, const std::string& what)
      : Error("cannot decode '" + path + "': " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace biseunet
