#pragma once

#include <stdexcept>
#include <string>

namespace atrium {

/// Base of every error raised by the library. Precondition violations on
/// plain arguments use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its contents do not decode (corrupt header,
/// truncated payload, unsupported datatype, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Two grids or tensors that must agree in shape do not.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// A named tensor expected by a parameter schema is absent.
class MissingKey : public Error {
 public:
  using Error::Error;
};

/// Training aborted (non-finite loss, empty data).
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Malformed experiment or command configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace atrium
