#pragma once

#include <stdexcept>
#include <string>

namespace coordscan {

// Base class for every error thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data that cannot support the requested computation (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace coordscan
