#pragma once

#include <stdexcept>
#include <string>

namespace transport {

// Each category maps onto a stable CLI exit code (see cli/commands.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

// A sensitivity value that pushes a target adherence probability outside [0, 1].
class DeltaError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace transport
