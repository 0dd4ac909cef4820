#pragma once

#include <stdexcept>
#include <string>

namespace obsbias {

/// Base class for all errors raised by this library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid numeric input: out of domain, non-finite, wrong sign.
class domain_error : public error {
 public:
  using error::error;
};

/// Structural mismatch: unknown column, missing config key, bad field name.
class schema_error : public error {
 public:
  using error::error;
};

/// Malformed input file; message carries row/column coordinates.
class parse_error : public error {
 public:
  using error::error;
};

/// Filesystem failure; message carries the path.
class io_error : public error {
 public:
  using error::error;
};

/// Model fitting failure: non-convergence, rank deficiency, separation,
/// degenerate data. Distinguished from validation errors so callers can
/// map them to a different exit code.
class fit_error : public error {
 public:
  using error::error;
};

}  // namespace obsbias
