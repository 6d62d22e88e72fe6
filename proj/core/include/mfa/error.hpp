#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace mfa {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values, wrong dimensions, empty inputs, out-of-range arguments.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// A capacitance factorization (or other numerical step) failed.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::optional<std::size_t> component)
      : Error(component ? what + " (component " + std::to_string(*component) + ")" : what),
        component_(component) {}

  std::optional<std::size_t> component() const noexcept { return component_; }

 private:
  std::optional<std::size_t> component_;
};

// Input cannot support the requested structure, e.g. fewer distinct points
// than clusters.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Malformed file. `offset` is the byte offset where the problem was found.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A metric whose denominator vanishes.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// An artifact (steering spec, decomposition) does not belong to the model it
// is used with.
class ModelMismatchError : public Error {
 public:
  using Error::Error;
};

// Training hit a non-finite loss. The message carries the step index and
// per-component statistics.
class TrainingAbortedError : public Error {
 public:
  TrainingAbortedError(const std::string& what, std::uint64_t step)
      : Error(what), step_(step) {}

  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

}  // namespace mfa
