#pragma once

#include <stdexcept>
#include <string>

namespace phenofuse {

/// Base class for every error raised by the library. The CLI maps these to
/// exit code 1 (input/validation problems) or 2 (runtime failures).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument, shape or range supplied by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed input files: cache, prior table, checkpoint, metadata table.
class FormatError : public Error {
 public:
  enum class Kind {
    io,
    missing_column,
    dimension_mismatch,
    truncated_payload,
    count_mismatch,
    bad_manifest,
  };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Numerical failure during training (non-finite loss or gradient).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace phenofuse
