#pragma once

// Convex MDL feature selection.
//
// Each generated feature f gets a soft selector eta_f in [0, 1]. The relaxed
// objective
//
//   g(eta) = c.eta + (log T)/2 e.eta
//            + sum_j max_theta [ sum_b #b H(theta_b) - 1/(2 beta) delta_j' N_j delta_j ]
//
// is convex in eta. The inner maximum is computed through the primal: scale
// each feature response by sqrt(eta_f) and minimize the regularized loss;
// its optimal value equals the inner maximum and theta* is the softmax of the
// scaled model.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cvxbn/core_model.hpp"
#include "cvxbn/estimation.hpp"

namespace cvxbn {

struct DescriptionCost {
  std::vector<double> structure;  // c_f
  double per_weight = 0.0;        // (log T)/2
};

/// c = |b| log n + log|Vals(child)| + sum_l log|Vals(b_l)|, natural log.
double feature_cost(const FeaturePattern& pattern, std::span<const VariableDomain> domains,
                    std::size_t n);

DescriptionCost description_costs(std::span<const FeaturePattern> features,
                                  std::span<const VariableDomain> domains, std::size_t n,
                                  std::size_t T);

/// Features and statistics of one child; eta entries [offset, offset + size).
struct ChildBlock {
  int child = 0;
  std::size_t offset = 0;
  std::vector<FeaturePattern> features;
  SufficientStats stats;
};

/// Everything needed to evaluate g: per-child blocks plus the global cost vector.
struct MdlProblem {
  std::vector<ChildBlock> children;
  DescriptionCost costs;
  double beta = 1.0;
  std::size_t rows = 0;
  std::size_t feature_count = 0;

  /// Global feature list in eta order.
  std::vector<FeaturePattern> all_features() const;
};

/// Builds blocks from per-child feature lists (indexed by child).
MdlProblem build_problem(const Dataset& data, std::span<const std::vector<FeaturePattern>> features,
                         double beta);

struct GEval {
  double value = 0.0;
  std::vector<double> gradient;
  /// Scaled-model weights u*_j per child (warm starts, rounding).
  std::vector<std::vector<double>> weights;
  /// Inner optimum theta* per child.
  std::vector<DualParams> theta;
};

struct GEvalOptions {
  /// Per-child warm-start weights; empty for cold start.
  std::span<const std::vector<double>> warm_start{};
  RegularizationConfig newton{};  // beta is taken from the problem
};

/// Per-child inner solves run in parallel.
GEval g_eta(const MdlProblem& problem, std::span<const double> eta,
            const GEvalOptions& options = {});

namespace serial {
GEval g_eta(const MdlProblem& problem, std::span<const double> eta,
            const GEvalOptions& options = {});
}  // namespace serial

/// Description length of a hard selection: structure and weight costs plus
/// the minimized regularized loss over only the selected features.
double mdl_objective(const MdlProblem& problem, std::span<const double> eta01,
                     const RegularizationConfig& newton = {});

struct TraceLine {
  int iteration;
  double value;
  double projected_gradient_norm;
};

struct MinimizeGOptions {
  double gradient_tolerance = 1e-5;
  int max_iterations = 500;
  int max_backtracks = 50;
  std::function<void(const TraceLine&)> on_iteration;
};

struct MinimizeGResult {
  std::vector<double> eta;
  double value = 0.0;
  bool converged = false;
  std::vector<TraceLine> trace;
  GEval at_solution;
};

/// Projected limited-memory quasi-Newton over [0, 1]^F. Throws StallError
/// carrying the best iterate when backtracking fails.
MinimizeGResult minimize_g(const MdlProblem& problem, std::vector<double> initial,
                           const MinimizeGOptions& options = {});

/// Feasibility of setting eta_f = 1 given the current (partially rounded) eta.
using ConsistencyChecker = std::function<bool(std::size_t, std::span<const double>)>;

struct RoundResult {
  std::vector<double> eta;  // in {0, 1}
  std::vector<std::vector<double>> weights;  // refit weights on the selected features
};

/// How the {0, 1} comparison prices a component.
enum class RoundingRule {
  /// Effective soft coefficients sqrt(eta) u held fixed; the component's
  /// coefficient is kept or zeroed.
  FixedWeights,
  /// The owning child's weights are re-minimized for each candidate value,
  /// with undecided components still at their soft values.
  Reoptimized,
};

/// Greedy rounding: largest fractional component first; a component that
/// passes the checker becomes whichever of {0, 1} gives the smaller
/// description length.
RoundResult greedy_round(const MdlProblem& problem, std::span<const double> soft_eta,
                         const GEval& soft_eval, const ConsistencyChecker& checker = {},
                         const RegularizationConfig& newton = {},
                         RoundingRule rule = RoundingRule::FixedWeights);

/// Network from a hard selection; features with eta = 0 are dropped.
BayesNet assemble_net(const Dataset& data, const MdlProblem& problem,
                      std::span<const double> eta01,
                      std::span<const std::vector<double>> weights, std::vector<int> order);

struct MdlSolution {
  std::vector<double> soft_eta;
  std::vector<double> rounded_eta;
  BayesNet net;
  std::vector<TraceLine> trace;
  MdlProblem problem;
  double soft_value = 0.0;
};

MdlSolution learn_fixed_order(const Dataset& data, std::span<const int> order, double beta,
                              const MinimizeGOptions& options = {},
                              RoundingRule rounding = RoundingRule::FixedWeights);

}  // namespace cvxbn
