// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mdal {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix / tensor dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument or input document is outside the accepted domain.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// An API was called in the wrong order (e.g. backward before forward).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf showed up in a loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bookkeeping invariant broken (e.g. annotating an already labeled item).
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Malformed data file; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace mdal
