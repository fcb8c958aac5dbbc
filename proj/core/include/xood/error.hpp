#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace xood {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration (missing threshold, invalid flag combination, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. Carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Numerical failure: divergence, singular factorization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public NumericalError {
 public:
  explicit TrainingDivergedError(int epoch)
      : NumericalError("training diverged: non-finite loss in epoch " + std::to_string(epoch)),
        epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class SingularMatrixError : public NumericalError {
 public:
  explicit SingularMatrixError(double pivot)
      : NumericalError("matrix is not positive definite (smallest pivot " + std::to_string(pivot) +
                       ")"),
        pivot_(pivot) {}

  double smallest_pivot() const noexcept { return pivot_; }

 private:
  double pivot_;
};

}  // namespace xood
