#pragma once

#include <stdexcept>
#include <string>

namespace impact {

/// Invalid layout, hyperparameter, or experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operand dimensions do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf showed up where finite values are required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Environment contract violation (bad action, step after done).
class EnvError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace impact
