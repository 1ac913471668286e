#pragma once

#include <stdexcept>
#include <string>

namespace ricnet {

// Incompatible tensor extents. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bad user input: malformed files, out-of-range config values, schema mismatch.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced a non-finite value or cannot proceed numerically.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation requested on a model kind that does not support it.
class KindError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace ricnet
