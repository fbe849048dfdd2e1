#pragma once

// Limited-memory quasi-Newton minimization with gradient projection and
// backtracking. Used for the relaxed MDL objective (box constraints) and for
// the barrier subproblems of the ordering relaxation (feasibility test,
// step halved until the trial point is strictly feasible).

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace cvxbn {

struct Objective {
  double value = 0.0;
  std::vector<double> gradient;
};

using ObjectiveFn = std::function<Objective(std::span<const double>)>;

struct QuasiNewtonOptions {
  std::vector<double> lower;  // empty: unbounded below
  std::vector<double> upper;  // empty: unbounded above
  /// Extra feasibility test for trial points; infeasible trials halve the step.
  std::function<bool(std::span<const double>)> feasible;
  double gradient_tolerance = 1e-5;  // on the projected gradient, max-norm
  int max_iterations = 500;
  int max_backtracks = 50;
  int memory = 10;
  double armijo = 1e-4;
  /// Called after each accepted step: (iteration, value, projected-gradient norm).
  std::function<void(int, double, double)> on_iteration;
};

struct QuasiNewtonResult {
  std::vector<double> x;
  double value = 0.0;
  double projected_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Throws StallError (carrying the best iterate) when backtracking fails.
QuasiNewtonResult minimize_quasi_newton(const ObjectiveFn& fn, std::vector<double> x0,
                                        const QuasiNewtonOptions& options);

}  // namespace cvxbn
