#pragma once

#include <stdexcept>
#include <string>

namespace cxrnet {

/// Shape or dimension contract violation (tensor construction, layer wiring).
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// A NaN or Inf appeared where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Operation called in a state that cannot serve it (e.g. eval-mode
/// batchnorm before any moving statistics exist).
class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

/// Dataset or image ingestion failure. The CLI maps these to exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Weights file format failure. The CLI maps these to exit code 4.
class WeightsError : public std::runtime_error {
 public:
  explicit WeightsError(const std::string& what) : std::runtime_error(what) {}
};

/// Configuration failure. The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cxrnet
