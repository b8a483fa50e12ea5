#pragma once

#include <stdexcept>
#include <string>

namespace mplnmix {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter violates its mathematical precondition (non-SPD covariance,
/// variance not exceeding the mean, ...).
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Malformed user-supplied data (negative counts, mismatched lengths).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Every component's ELBO is -inf for one observation.
class DegenerateObservation : public Error {
 public:
  DegenerateObservation(std::size_t row, const std::string& what)
      : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class EmptyComponent : public Error {
 public:
  using Error::Error;
};

class DegenerateScatter : public Error {
 public:
  using Error::Error;
};

/// A component's effective size fell below the collapse threshold.
class ComponentCollapse : public Error {
 public:
  ComponentCollapse(int component, const std::string& what)
      : Error(what), component_(component) {}
  int component() const noexcept { return component_; }

 private:
  int component_;
};

/// ELBO became non-finite during the outer loop.
class NumericalFailure : public Error {
 public:
  NumericalFailure(int iteration, const std::string& what)
      : Error(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

class InitializationError : public Error {
 public:
  using Error::Error;
};

/// Every cell of a grid search failed; the message aggregates per-cell causes.
class GridFailure : public Error {
 public:
  using Error::Error;
};

/// CSV parse failure; row and column are 1-based file coordinates.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : Error(what), row_(row), column_(column) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace mplnmix
