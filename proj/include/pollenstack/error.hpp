#pragma once

#include <stdexcept>
#include <string>

namespace pollenstack {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or missing input data: images, dataset files, prediction files.
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind {
  BadMagic,
  VersionMismatch,
  Truncated,
  Inconsistent,
  Malformed,
};

// Violation of one of the on-disk formats (PSTK blob, index, split, manifest,
// prediction files).
class FormatError : public InputError {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : InputError(what), kind_(kind) {}

  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

}  // namespace pollenstack
