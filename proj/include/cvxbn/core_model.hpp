#pragma once

// Data model and the exponential-form Bayesian network.
//
// A network stores, per child variable, a sparse list of indicator features
// and one weight per feature. The conditional of a child given its parents is
// the softmax over child values of the summed weights of matching features.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cvxbn {

struct VariableDomain {
  std::string name;
  std::vector<std::string> values;

  int cardinality() const noexcept { return static_cast<int>(values.size()); }
  /// Index of a value label, or -1 if absent.
  int index_of(std::string_view label) const noexcept;
};

/// Complete discrete data: T rows of n value indices, stored row-major.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<VariableDomain> domains, std::vector<int> cells);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t vars() const noexcept { return domains_.size(); }
  int at(std::size_t r, std::size_t c) const noexcept { return cells_[r * vars() + c]; }
  std::span<const int> row(std::size_t r) const noexcept {
    return {cells_.data() + r * vars(), vars()};
  }
  const VariableDomain& domain(std::size_t j) const noexcept { return domains_[j]; }
  const std::vector<VariableDomain>& domains() const noexcept { return domains_; }
  std::span<const int> cells() const noexcept { return cells_; }

  Dataset subset(std::span<const std::size_t> row_ids) const;

 private:
  std::vector<VariableDomain> domains_;
  std::vector<int> cells_;
  std::size_t rows_ = 0;
};

/// Indicator 1(x_child = child_value, x_parents = parent_values).
/// A pattern without child_value constrains only the parents.
struct FeaturePattern {
  int child = 0;
  std::optional<int> child_value;
  std::vector<int> parents;        // strictly increasing, never contains child
  std::vector<int> parent_values;  // aligned with parents

  std::size_t length() const noexcept {
    return parents.size() + (child_value ? 1 : 0);
  }
  bool parents_match(std::span<const int> row) const noexcept;
  /// Throws InputError if the pattern is malformed.
  void validate(std::size_t n) const;

  friend bool operator==(const FeaturePattern&, const FeaturePattern&) = default;
  friend auto operator<=>(const FeaturePattern&, const FeaturePattern&) = default;
};

/// Evaluates the pattern on a full row as a product of single-variable
/// indicators. Throws InputError on out-of-range indices.
int evaluate_feature(const FeaturePattern& pattern, std::span<const int> row);

struct LocalModel {
  int child = 0;
  int cardinality = 2;
  std::vector<FeaturePattern> features;
  std::vector<double> weights;

  /// Sorted union of parent variables over all features.
  std::vector<int> parent_union() const;
};

/// Softmax over child values. Entries of parent_row not referenced by the
/// features are ignored; the child entry is ignored too.
std::vector<double> local_conditional(const LocalModel& local,
                                      std::span<const int> parent_row);

/// Log-probability of row[child] under the local model.
double local_log_prob(const LocalModel& local, std::span<const int> row);

struct CptView {
  int child = 0;
  std::vector<int> parents;
  std::vector<int> parent_cardinalities;
  /// One probability vector per parent configuration. Configurations are
  /// enumerated in mixed radix with the last parent varying fastest.
  std::vector<std::vector<double>> table;
};

inline constexpr std::size_t kDefaultConfigCap = std::size_t{1} << 20;

CptView to_cpt(const LocalModel& local, std::span<const VariableDomain> domains,
               std::size_t config_cap = kDefaultConfigCap);

class BayesNet {
 public:
  BayesNet() = default;
  /// Validates order and acyclicity; throws InputError / InvariantError.
  BayesNet(std::vector<VariableDomain> domains, std::vector<LocalModel> locals,
           std::vector<int> order);

  std::size_t vars() const noexcept { return domains_.size(); }
  const std::vector<VariableDomain>& domains() const noexcept { return domains_; }
  const std::vector<LocalModel>& locals() const noexcept { return locals_; }
  const LocalModel& local(std::size_t j) const noexcept { return locals_[j]; }
  const std::vector<int>& order() const noexcept { return order_; }

  /// Log-probability of a full row.
  double log_prob(std::span<const int> row) const;

 private:
  std::vector<VariableDomain> domains_;
  std::vector<LocalModel> locals_;
  std::vector<int> order_;
};

/// Mean negative log-likelihood in nats per row.
double neg_loglik(const BayesNet& net, const Dataset& data);

/// Ancestral sampling in net.order(); deterministic for a fixed seed.
Dataset sample(const BayesNet& net, std::size_t count, std::uint64_t seed);

using Edge = std::pair<int, int>;  // (parent, child)

/// Edges implied by feature parents. Throws InvariantError on a cycle.
std::vector<Edge> extract_dag(const BayesNet& net);

/// Kahn's algorithm. Returns an empty vector if the graph has a cycle.
std::vector<int> topological_order(std::size_t n, std::span<const Edge> edges);

bool same_domains(std::span<const VariableDomain> a, std::span<const VariableDomain> b);

/// Text serialization; weights round-trip bit-exactly.
std::string save_model(const BayesNet& net);
BayesNet load_model(std::string_view text);
void save_model_file(const BayesNet& net, const std::string& path);
BayesNet load_model_file(const std::string& path);

namespace serial {
double neg_loglik(const BayesNet& net, const Dataset& data);
}  // namespace serial

}  // namespace cvxbn
