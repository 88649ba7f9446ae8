#pragma once

#include <stdexcept>
#include <string>

namespace safempc {

/// A configuration value violates a module precondition.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// DDP was asked for a horizon shorter than two knots.
class InvalidHorizon : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Network input, mask, or parameter shapes disagree.
class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss or gradient.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reading or writing an artifact failed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace safempc
