#pragma once

#include <stdexcept>
#include <string>

namespace qgflow {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A coupling vector, cycle parameter or web strength is outside its domain.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// A row of the secular matrix vanished; the vertex condition is not admissible.
class DegenerateRow : public Error {
 public:
  using Error::Error;
};

/// The requested wavenumber is not an eigenvalue (nullity zero).
class NotARoot : public Error {
 public:
  using Error::Error;
};

/// Branch matching stayed ambiguous down to the minimum angular step.
class TrackingAmbiguity : public Error {
 public:
  TrackingAmbiguity(const std::string& what, double theta_lo, double theta_hi)
      : Error(what), theta_lo_(theta_lo), theta_hi_(theta_hi) {}
  double theta_lo() const { return theta_lo_; }
  double theta_hi() const { return theta_hi_; }

 private:
  double theta_lo_;
  double theta_hi_;
};

/// A tracked branch does not span the full cycle.
class IncompleteBranch : public Error {
 public:
  using Error::Error;
};

/// Malformed web description or expression.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace qgflow
