#pragma once

#include <stdexcept>
#include <string>

namespace gfz {

/// Tensor shapes that do not fit the op they are passed to.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration or arguments to a public operation.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or unreadable files (dataset containers, checkpoints, reports).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gfz
