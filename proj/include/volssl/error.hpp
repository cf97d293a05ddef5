#pragma once

#include <stdexcept>
#include <string>

namespace volssl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor / parameter shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside an operation's domain (label out of range, bad index, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Malformed file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Localization found nothing that looks like an object.
class NoObjectError : public Error {
 public:
  using Error::Error;
};

}  // namespace volssl
