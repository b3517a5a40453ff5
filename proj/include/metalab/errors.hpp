#pragma once

#include <stdexcept>
#include <string>

namespace metalab {

// Violated input contract (out-of-range values, bad labels, ...).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor shapes that do not fit an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Lab values whose RGB image leaves the sRGB cube.
class GamutError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid run configuration, dataset layout or checkpoint/config mismatch.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace metalab
