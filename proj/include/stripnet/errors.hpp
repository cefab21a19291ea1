#pragma once

#include <stdexcept>
#include <string>

namespace stripnet {

/// A precondition of an operation was not met (shape mismatch, misuse of a tape, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid model, training or run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data could not be used (missing files, empty datasets, bad values).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or a failed numerical check.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Statistics region has (near) zero spread; z-normalization is undefined.
class ZeroStdError : public DataError {
 public:
  using DataError::DataError;
};

enum class FormatErrorKind {
  BadMagic,
  BadHeader,
  UnsupportedDatatype,
  UnsupportedLayout,
  Truncated,
  LengthMismatch,
  Io,
};

const char* to_string(FormatErrorKind kind) noexcept;

/// Malformed or unsupported NIfTI / NPY / checkpoint bytes.
class FormatError : public DataError {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : DataError(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

inline const char* to_string(FormatErrorKind kind) noexcept {
  switch (kind) {
    case FormatErrorKind::BadMagic: return "bad magic";
    case FormatErrorKind::BadHeader: return "bad header";
    case FormatErrorKind::UnsupportedDatatype: return "unsupported datatype";
    case FormatErrorKind::UnsupportedLayout: return "unsupported layout";
    case FormatErrorKind::Truncated: return "truncated payload";
    case FormatErrorKind::LengthMismatch: return "payload length mismatch";
    case FormatErrorKind::Io: return "i/o error";
  }
  return "format error";
}

}  // namespace stripnet
