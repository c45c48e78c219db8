#pragma once

#include <stdexcept>
#include <string>

namespace msissa {

/// Root of the library's exception hierarchy. The CLI maps each subclass to
/// an exit code (validation 2, numeric 3, IO 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, out-of-domain parameters, malformed inputs.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A natural parameter left its domain; `parameter()` names it.
class InvalidParameterError : public ValidationError {
 public:
  InvalidParameterError(std::string parameter, double value)
      : ValidationError("invalid parameter '" + parameter + "' = " + std::to_string(value)),
        parameter_(std::move(parameter)),
        value_(value) {}

  const std::string& parameter() const noexcept { return parameter_; }
  double value() const noexcept { return value_; }

 private:
  std::string parameter_;
  double value_;
};

/// File content that violates a documented schema.
class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Non-finite likelihoods, singular systems, samplers that cannot make progress.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace msissa
