#pragma once

#include <stdexcept>
#include <string>

namespace morphofv {

// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (bad index, empty input, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Vector or matrix sizes disagree with a model or with each other.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed, truncated or version-mismatched files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Checksum or content-hash verification failed.
class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Dataset manifest failed validation.
class ManifestError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw PreconditionError(what);
}

inline void require_dim(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace detail
}  // namespace morphofv
