#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace cvxbn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad indices, ragged CSV rows, domain mismatches.
class InputError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// An enumeration or generated set grew past its configured cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_gradient_norm)
      : Error(what), last_gradient_norm_(last_gradient_norm) {}
  double last_gradient_norm() const noexcept { return last_gradient_norm_; }

 private:
  double last_gradient_norm_;
};

/// Line search could not make progress. Carries the best iterate seen.
class StallError : public Error {
 public:
  StallError(const std::string& what, std::vector<double> best, double best_value)
      : Error(what), best_(std::move(best)), best_value_(best_value) {}
  const std::vector<double>& best_iterate() const noexcept { return best_; }
  double best_value() const noexcept { return best_value_; }

 private:
  std::vector<double> best_;
  double best_value_;
};

class FeasibilityError : public Error {
 public:
  using Error::Error;
};

class SetupError : public Error {
 public:
  using Error::Error;
};

/// Internal invariant broken (e.g. a cycle after rounding).
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace cvxbn
