#pragma once

#include <stdexcept>
#include <string>

namespace cellflow {

// Every failure raised by the library derives from Error. The CLI maps
// InputError subclasses to exit status 2 and IoError to exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied something that violates a precondition.
class InputError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

class ArityError : public InputError {
 public:
  using InputError::InputError;
};

class RangeError : public InputError {
 public:
  using InputError::InputError;
};

class NumericError : public InputError {
 public:
  using InputError::InputError;
};

class IntegrityError : public InputError {
 public:
  using InputError::InputError;
};

class FormatError : public InputError {
 public:
  using InputError::InputError;
};

// Schema violation with the JSON path of the offending field, e.g.
// "$.cells[0].polygon".
class ValidationError : public InputError {
 public:
  ValidationError(std::string path, const std::string& message)
      : InputError(path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cellflow
