#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rosa {

// Base of every error raised by the library. Callers that only need to
// report failures can catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class RankTooLargeError : public Error {
 public:
  RankTooLargeError(std::size_t rank, std::size_t bound)
      : Error("rank " + std::to_string(rank) + " outside [1, " + std::to_string(bound) + "]"),
        rank_(rank),
        bound_(bound) {}

  std::size_t rank() const noexcept { return rank_; }
  std::size_t bound() const noexcept { return bound_; }

 private:
  std::size_t rank_;
  std::size_t bound_;
};

class SingularMatrixError : public Error {
 public:
  SingularMatrixError(const std::string& what, double smallest_singular_value)
      : Error(what), smallest_(smallest_singular_value) {}

  double smallest_singular_value() const noexcept { return smallest_; }

 private:
  double smallest_;
};

// Broken caller contract: stale forward cache, misaligned gradients, ...
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error("config field '" + field + "': " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class NumericFailure : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::size_t offset)
      : Error(message + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rosa
