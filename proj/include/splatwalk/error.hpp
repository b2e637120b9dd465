#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splatwalk {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file or structured-text document.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that carries unusable values (NaN, overflow, ...).
class DataError : public Error {
 public:
  using Error::Error;
  DataError(const std::string& what, std::size_t index)
      : Error(what + " (element " + std::to_string(index) + ")"), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_ = static_cast<std::size_t>(-1);
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Precondition violated by the caller.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Geometry too degenerate to analyze (collinear centers, rank deficiency).
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Nothing left to work with after filtering.
class EmptySceneError : public Error {
 public:
  using Error::Error;
};

}  // namespace splatwalk
