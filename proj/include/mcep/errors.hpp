#pragma once

#include <stdexcept>
#include <string>

namespace mcep {

// Bad run configuration (flags, settings, hyper-parameters). CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent input data. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mcep
