#pragma once

#include <stdexcept>
#include <string>

namespace scdmhe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or out-of-domain argument passed to a model or estimator.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Mismatched vector/matrix dimensions or sequence lengths.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A state/control-dependent factor cannot be evaluated (e.g. B(u) at u = 0).
class SingularFactorError : public Error {
 public:
  using Error::Error;
};

/// A covariance is not symmetric positive definite.
class CovarianceError : public Error {
 public:
  using Error::Error;
};

/// The KKT matrix of an equality QP has a zero (or negligible) pivot.
class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(const std::string& what, int pivot)
      : Error(what), pivot_(pivot) {}
  int pivot() const { return pivot_; }

 private:
  int pivot_;
};

/// KKT residual above tolerance after iterative refinement.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Recursive filter failure (singular innovation covariance, bad square root).
class FilterError : public Error {
 public:
  using Error::Error;
};

/// Invalid harness configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace scdmhe
