#pragma once

#include <stdexcept>
#include <string>

namespace coopgrid {

/// Base of every error thrown by the library. `code()` is the stable
/// machine-readable identifier used in the CLI error envelope.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, std::string context = {})
      : std::runtime_error(message), code_(std::move(code)), context_(std::move(context)) {}

  const std::string& code() const noexcept { return code_; }
  const std::string& context() const noexcept { return context_; }

 private:
  std::string code_;
  std::string context_;
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& message, std::string context = {})
      : Error("parameter_error", message, std::move(context)) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string context = {})
      : Error("config_error", message, std::move(context)) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& message, std::string context = {})
      : Error("numerical_error", message, std::move(context)) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message, std::string context = {})
      : Error("io_error", message, std::move(context)) {}
};

}  // namespace coopgrid
