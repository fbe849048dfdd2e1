#pragma once

// Universal feature generation for one child.
//
// Feature spans are measured on the locally augmented matrix: every training
// row is replicated once per child value, with the child column overwritten.
// The lattice of assignment patterns is searched shortest first; a batch of
// extensions of a surviving pattern is kept only if it raises the rank of
// the accumulated span. The search stops after a level that adds no rank.

#include <cstddef>
#include <span>
#include <vector>

#include "cvxbn/core_model.hpp"

namespace cvxbn {

struct AugmentedMatrix {
  int child = 0;
  int cardinality = 2;
  std::vector<int> candidates;  // sorted, never contains child
  std::size_t source_rows = 0;
  std::size_t width = 0;        // n, full data width
  std::vector<int> cells;       // (source_rows * cardinality) x width, row-major

  std::size_t rows() const noexcept { return source_rows * cardinality; }
  std::span<const int> row(std::size_t r) const noexcept {
    return {cells.data() + r * width, width};
  }
  /// Response of a pattern (child-free patterns included) on every row.
  std::vector<double> response(const FeaturePattern& pattern) const;
};

/// Replica r * V + a of source row r carries child value a.
AugmentedMatrix augment(const Dataset& data, int child, std::span<const int> candidates);

/// Incremental orthonormal basis for rank tracking.
class SpanTracker {
 public:
  SpanTracker(std::size_t dimension, double tolerance);
  /// Default tolerance 1e-9 * sqrt(dimension).
  explicit SpanTracker(std::size_t dimension);

  /// Orthogonalizes (modified Gram-Schmidt, one re-orthogonalization pass);
  /// accepts iff the residual norm exceeds tolerance * |response|.
  bool add(std::span<const double> response);
  /// True iff the response already lies in the span.
  bool contains(std::span<const double> response) const;

  std::size_t rank() const noexcept { return basis_.size(); }
  std::size_t dimension() const noexcept { return dimension_; }
  double tolerance() const noexcept { return tolerance_; }
  const std::vector<std::vector<double>>& basis() const noexcept { return basis_; }

 private:
  std::vector<double> residual(std::span<const double> response) const;

  std::size_t dimension_;
  double tolerance_;
  std::vector<std::vector<double>> basis_;
};

struct RankAddResult {
  bool accepted;
  std::size_t rank;
};
RankAddResult rank_add(SpanTracker& tracker, std::span<const double> response);

struct FeatureGenOptions {
  /// Cap on returned features; 0 means 10 * T * V.
  std::size_t cap = 0;
};

struct FeatureGenResult {
  std::vector<FeaturePattern> features;    // child-bearing, returned to callers
  std::vector<FeaturePattern> kept;        // every kept pattern, incl. constant and child-free
  std::vector<FeaturePattern> pruned;      // candidates in rejected batches
  std::size_t rank = 0;
  std::size_t levels = 0;
};

FeatureGenResult generate_features_detailed(const Dataset& data, int child,
                                            std::span<const int> candidates,
                                            const FeatureGenOptions& options = {});

std::vector<FeaturePattern> generate_features(const Dataset& data, int child,
                                              std::span<const int> candidates,
                                              const FeatureGenOptions& options = {});

/// Every pattern with a child value over any subset of candidates.
std::vector<FeaturePattern> exhaustive_patterns(std::span<const VariableDomain> domains, int child,
                                                std::span<const int> candidates);

/// True iff every reference response lies in span(features + per-configuration
/// constants) on the augmented matrix.
bool verify_span(std::span<const FeaturePattern> features,
                 std::span<const FeaturePattern> reference, const AugmentedMatrix& augmented);

/// Candidate sets for every child: predecessors in `order`, or all other
/// variables when `order` is empty.
std::vector<std::vector<int>> candidate_sets(std::size_t n, std::span<const int> order);

/// Feature generation for all children; parallel over children.
std::vector<std::vector<FeaturePattern>> generate_all_features(
    const Dataset& data, std::span<const std::vector<int>> candidates,
    const FeatureGenOptions& options = {});

namespace serial {
std::vector<std::vector<FeaturePattern>> generate_all_features(
    const Dataset& data, std::span<const std::vector<int>> candidates,
    const FeatureGenOptions& options = {});
}  // namespace serial

}  // namespace cvxbn
