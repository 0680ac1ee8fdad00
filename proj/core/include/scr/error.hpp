#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace scr {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters: shape mismatches, M not dividing D, C = 0.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A value object failed its invariants; `field()` names the culprit.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed binary artifact. `offset()` is the byte where decoding failed.
class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& what)
      : Error("at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Query/gallery or sampling protocol cannot be satisfied by the data.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an operation precondition (wrong distance kind, NaN input).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An index or table refers outside its bounds.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace scr
