#pragma once

#include <stdexcept>
#include <string>

namespace ctzip {

// Base class for all library errors. Subclasses distinguish failure
// categories so callers (and the CLI exit-code mapping) can react without
// string matching.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem-level failure: missing file, unreadable path, short write.
class IoError : public Error {
 public:
  using Error::Error;
};

// Input bytes do not match the expected file format (bad magic, truncated
// header, inconsistent payload length).
class FormatError : public Error {
 public:
  using Error::Error;
};

// The format is recognized but a variant we deliberately do not handle
// (e.g. 16-bit PGM).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

// A rectangle, index or coordinate falls outside its container.
class BoundsError : public Error {
 public:
  using Error::Error;
};

// Two operands have incompatible dimensions, or a dimension violates an
// operation's divisibility requirement.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A configuration value is out of its documented range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Data values are invalid for the requested operation (non-finite inputs,
// out-of-range codebook index).
class DataError : public Error {
 public:
  using Error::Error;
};

// The input is degenerate for the algorithm (e.g. a constant image has no
// threshold separating two classes).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctzip
