#pragma once

#include <stdexcept>
#include <string>

namespace inkmark {

/// Base class for every error raised by the library. The CLI maps these to
/// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter is outside its documented domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a contract (empty text, malformed file, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace inkmark
