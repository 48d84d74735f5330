#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ampli {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes do not compose. `layer` is the index into
/// Network::layers(), or npos when the mismatch is not tied to a layer.
class ShapeError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  ShapeError(std::size_t layer, const std::string& what)
      : Error(layer == npos ? what : "layer " + std::to_string(layer) + ": " + what), layer_(layer) {}

  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

/// A NaN or Inf showed up where finite values are required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Invalid run, sweep or dataset configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line` is 1-based; 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Invalid phase tuple in a training strategy; `tuple_index` is 0-based.
class StrategyError : public ConfigError {
 public:
  StrategyError(std::size_t tuple_index, const std::string& what)
      : ConfigError("strategy tuple " + std::to_string(tuple_index) + ": " + what),
        tuple_index_(tuple_index) {}

  std::size_t tuple_index() const noexcept { return tuple_index_; }

 private:
  std::size_t tuple_index_;
};

}  // namespace ampli
