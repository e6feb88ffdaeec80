#pragma once

#include <stdexcept>
#include <string>

namespace tabvfl {

// Error families map onto the CLI exit codes: config 1, data 2, protocol/training 3.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape mismatches and non-finite values inside the numerical core.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace tabvfl
