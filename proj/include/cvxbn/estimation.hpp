#pragma once

// Regularized maximum-likelihood estimation of one child's weights.
//
// The primal objective for child j is
//
//   L(u) = beta/2 |u|^2 + sum_b #b [ A(u, b) - phibar_b . u ]
//
// where b ranges over observed configurations of the parent union. The dual
// is a regularized maximum-entropy problem over one simplex per b; it is
// kept for verification (strong duality, primal recovery).
//
// Every routine accepts an optional per-feature `scale`: feature f then has
// response scale[f] * indicator. An empty span means all ones.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cvxbn/core_model.hpp"

namespace cvxbn {

/// One observed parent configuration.
struct ConfigGroup {
  std::vector<int> key;             // values of the parent union
  double count = 0.0;               // #b
  std::vector<double> child_counts; // #(a, b) per child value
  std::vector<std::vector<int>> active;  // per child value: indices of matching features
};

struct SufficientStats {
  int child = 0;
  int cardinality = 2;
  std::size_t feature_count = 0;
  std::vector<int> parent_union;
  std::vector<ConfigGroup> groups;
  double total = 0.0;  // sum of #b, equals T

  /// phibar_b = sum_a (#ab/#b) phi(a, b), unscaled.
  std::vector<double> mean_features(std::size_t group) const;
};

SufficientStats collect_stats(const Dataset& data, int child, std::span<const int> parent_union,
                              std::span<const FeaturePattern> features);
/// Parent union taken from the features.
SufficientStats collect_stats(const Dataset& data, int child,
                              std::span<const FeaturePattern> features);

struct RegularizationConfig {
  double beta = 1.0;
  double tolerance = 1e-8;
  int max_iterations = 100;
  /// Condition estimate above which Newton steps are damped.
  double condition_limit = 1e12;
};

/// Log partition for a single configuration given child scores w.phi(a, b).
double log_partition(std::span<const double> child_scores);
/// Log partition from weights, features and a (full-width) parent row.
double log_partition(std::span<const double> weights, std::span<const FeaturePattern> features,
                     int cardinality, std::span<const int> parent_row);

struct LossEval {
  double value = 0.0;
  std::vector<double> gradient;
};

LossEval regularized_loss(std::span<const double> weights, const SufficientStats& stats,
                          double beta, std::span<const double> scale = {});

/// Unregularized part: sum_b #b [A(u, b) - phibar_b . u].
double data_loss(std::span<const double> weights, const SufficientStats& stats,
                 std::span<const double> scale = {});

using TraceSink = std::function<void(const std::string&)>;

struct NewtonOptions {
  std::span<const double> warm_start{};
  std::span<const double> scale{};
  TraceSink trace{};  // receives "iteration\tobjective\tgradient-norm" lines
};

/// Damped Newton with backtracking. Throws ConvergenceError.
std::vector<double> newton_solve(const SufficientStats& stats, const RegularizationConfig& config,
                                 const NewtonOptions& options = {});

/// Per-group softmax under the (scaled) model.
std::vector<std::vector<double>> model_conditionals(std::span<const double> weights,
                                                    const SufficientStats& stats,
                                                    std::span<const double> scale = {});

double entropy(std::span<const double> p);

/// theta_b per observed configuration, aligned with stats.groups.
using DualParams = std::vector<std::vector<double>>;

/// delta = sum_b #b (phibar_b - E_theta_b[phi]), in scaled feature space.
std::vector<double> dual_residual(const DualParams& theta, const SufficientStats& stats,
                                  std::span<const double> scale = {});

/// Throws InputError if theta is off the simplices.
double dual_objective(const DualParams& theta, const SufficientStats& stats, double beta,
                      std::span<const double> scale = {});

std::vector<double> recover_primal(const DualParams& theta, const SufficientStats& stats,
                                   double beta, std::span<const double> scale = {});

/// Empirical conditionals #(a,b)/#b.
DualParams empirical_conditionals(const SufficientStats& stats);

struct DualSolveOptions {
  double tolerance = 1e-11;  // on the fixed-point residual
  int max_iterations = 200000;
};

/// Exponentiated-gradient ascent on the dual. Verification path only.
DualParams solve_dual(const SufficientStats& stats, double beta,
                      const DualSolveOptions& options = {});

}  // namespace cvxbn
