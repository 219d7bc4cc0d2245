#pragma once

#include <stdexcept>
#include <string>

namespace subalign {

// Base for every library error. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside its documented domain (d out of range, bad threshold).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Shapes of two operands do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data: manifests, feature files, configs.
class DataError : public Error {
 public:
  using Error::Error;
};

// Features scored in a frame other than the one a detector was trained in,
// or an alignment applied to a subspace it was not solved for.
class FrameError : public Error {
 public:
  using Error::Error;
};

// Rank deficiency, failed eigensolver and similar numerical failures.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, long achievable_rank = -1)
      : Error(what), achievable_rank_(achievable_rank) {}

  long achievable_rank() const noexcept { return achievable_rank_; }

 private:
  long achievable_rank_;
};

}  // namespace subalign
