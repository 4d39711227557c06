#pragma once

#include <stdexcept>
#include <string>

namespace edfr {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct InvalidParameters : Error {
  using Error::Error;
};

struct DisconnectedGraph : Error {
  using Error::Error;
};

struct NonpositiveSusceptance : Error {
  using Error::Error;
};

struct UnbalancedInjection : Error {
  using Error::Error;
};

// A constraint system admits no feasible point within tolerance.  Carries the
// measured violation and, where meaningful, the outcome it was detected in.
struct Infeasible : Error {
  double violation = 0.0;
  int outcome_id = -1;
  Infeasible(const std::string& what, double viol, int outcome = -1)
      : Error(what), violation(viol), outcome_id(outcome) {}
};

struct MaxIterations : Error {
  using Error::Error;
};

struct MissingDuals : Error {
  using Error::Error;
};

struct OutOfBounds : Error {
  using Error::Error;
};

struct NumericalBlowup : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct UnknownUnitGroup : Error {
  using Error::Error;
};

}  // namespace edfr
