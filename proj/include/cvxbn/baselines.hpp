#pragma once

// Reference structure learners: decomposable BIC / BDeu scores, K2 search
// under a fixed order, and hill climbing over DAGs with restarts.
//
// Learned structures are turned into networks with saturated features whose
// weights are log conditional probabilities, so they plug into the same
// evaluation path as the convex learner.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "cvxbn/core_model.hpp"

namespace cvxbn {

enum class ScoreKind { Bic, Bde };

/// Per-child sorted parent lists.
using ParentSets = std::vector<std::vector<int>>;

/// Counts #(b, a) over parent configurations in mixed radix (last parent
/// fastest). Throws CapacityError when the configuration count exceeds cap.
struct FamilyCounts {
  std::size_t configs = 1;
  int cardinality = 0;
  std::vector<std::size_t> counts;  // configs * cardinality
};

FamilyCounts family_counts(const Dataset& data, int child, std::span<const int> parents,
                           std::size_t config_cap = kDefaultConfigCap);

/// Maximized log-likelihood minus (d/2) log T.
double bic_local(const Dataset& data, int child, std::span<const int> parents,
                 std::size_t config_cap = kDefaultConfigCap);

/// BDeu log marginal likelihood with equivalent sample size ess.
double bde_local(const Dataset& data, int child, std::span<const int> parents, double ess = 1.0,
                 std::size_t config_cap = kDefaultConfigCap);

class ScoreCache {
 public:
  ScoreCache(const Dataset& data, ScoreKind kind, double ess = 1.0)
      : data_(&data), kind_(kind), ess_(ess) {}

  /// `parents` must be sorted.
  double local(int child, const std::vector<int>& parents);
  double total(const ParentSets& parents);

  ScoreKind kind() const noexcept { return kind_; }
  double ess() const noexcept { return ess_; }
  std::size_t size() const noexcept { return memo_.size(); }

 private:
  const Dataset* data_;
  ScoreKind kind_;
  double ess_;
  std::map<std::pair<int, std::vector<int>>, double> memo_;
};

/// Add-`pseudocount` empirical conditionals as a network with saturated
/// features (weight = log probability). `order` must respect the parents.
BayesNet table_net(const Dataset& data, const ParentSets& parents, std::vector<int> order,
                   double pseudocount = 1.0);

/// Network from explicit tables: tables[j][b] is the distribution of child j
/// under parent configuration b (mixed radix, last parent fastest).
BayesNet table_net(std::vector<VariableDomain> domains, const ParentSets& parents,
                   const std::vector<std::vector<std::vector<double>>>& tables,
                   std::vector<int> order);

bool is_acyclic(const ParentSets& parents);

struct K2Options {
  ScoreKind score = ScoreKind::Bic;
  int max_parents = -1;  // -1: n - 1
  double ess = 1.0;
};

/// Parent sets chosen greedily among predecessors in `order`.
ParentSets k2_parents(const Dataset& data, std::span<const int> order,
                      const K2Options& options = {});

BayesNet k2_search(const Dataset& data, std::span<const int> order,
                   const K2Options& options = {});

struct HillClimbOptions {
  ScoreKind score = ScoreKind::Bic;
  int restarts = 4;
  int perturbation = -1;  // random moves per restart; -1: n
  std::uint64_t seed = 0;
  double ess = 1.0;
};

struct HillClimbResult {
  ParentSets parents;
  double score = 0.0;
  int moves = 0;
};

HillClimbResult hill_climb_dag(const Dataset& data, const HillClimbOptions& options = {});

BayesNet hill_climb(const Dataset& data, const HillClimbOptions& options = {});

}  // namespace cvxbn
