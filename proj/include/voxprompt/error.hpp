#pragma once

#include <stdexcept>
#include <string>

namespace voxprompt {

// Malformed input (bad magic, bad JSON, corrupted header).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that uses a feature outside the supported subset.
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Data section shorter than the header promises.
class LengthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension or tensor-shape disagreement between two operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace voxprompt
