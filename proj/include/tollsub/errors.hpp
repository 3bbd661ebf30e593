#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tollsub {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed instance text or mechanism string. `location` names the
/// offending field (e.g. "edges[1].coeffs[0]") or byte offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& location, const std::string& what)
      : Error(location.empty() ? what : location + ": " + what), location_(location) {}
  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

/// A structural invariant of a problem, flow or sensitivity model is violated.
class InvariantError : public Error {
 public:
  using Error::Error;
};

class FeasibilityError : public InvariantError {
 public:
  using InvariantError::InvariantError;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of a formula or parameterised mechanism.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Latency outside the class a mechanism is defined on (e.g. non-affine).
class MechanismClassError : public Error {
 public:
  using Error::Error;
};

class TopologyError : public Error {
 public:
  using Error::Error;
};

/// Effective edge cost decreases somewhere on [0,1].
class NonMonotoneCostError : public Error {
 public:
  using Error::Error;
};

class DegenerateInstanceError : public Error {
 public:
  using Error::Error;
};

/// The solver hit its iteration cap. Carries the best iterate found.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> best_path_flows, double best_gap,
                   std::vector<double> gap_trace = {})
      : Error(what),
        best_path_flows_(std::move(best_path_flows)),
        best_gap_(best_gap),
        gap_trace_(std::move(gap_trace)) {}

  const std::vector<double>& best_path_flows() const noexcept { return best_path_flows_; }
  double best_gap() const noexcept { return best_gap_; }
  const std::vector<double>& gap_trace() const noexcept { return gap_trace_; }

 private:
  std::vector<double> best_path_flows_;
  double best_gap_;
  std::vector<double> gap_trace_;
};

}  // namespace tollsub
