#pragma once

#include <stdexcept>
#include <string>

namespace dpdl {

// Base of every exception thrown by the library. The CLI maps the concrete
// subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments, inconsistent shapes, empty inputs.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Wrong magic bytes, unknown version or malformed text.
class FormatError : public Error {
 public:
  using Error::Error;
};

// File is well-formed up to the point where it ends early.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

// A sampling protocol cannot be realized on the given dataset.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (e.g. t >= 1).
class DomainError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// Single-class input to a two-class metric.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during training or scoring.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpdl
