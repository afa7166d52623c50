#pragma once

#include <stdexcept>
#include <string>

namespace i2v {

// Base of every error raised by the library. Subclasses let the CLI map
// failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Autodiff misuse: non-scalar loss, missing gradient, ...
class GradError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class TapError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// A weight file written for a different architecture.
class ArchMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Accuracy gate or eval-set qualification failed.
class GateError : public Error {
 public:
  using Error::Error;
};

}  // namespace i2v
