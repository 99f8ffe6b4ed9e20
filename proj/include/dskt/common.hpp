#pragma once

#include <stdexcept>
#include <string>

namespace dskt {

// Base class for all library errors. CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor/feature-map extents do not line up.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

// Group elements from groups of different order were mixed.
class OrderMismatchError : public Error {
 public:
  explicit OrderMismatchError(const std::string& what) : Error(what) {}
};

// Malformed input file; message carries the line number where known.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

}  // namespace dskt
