#pragma once

// Data ingestion, synthetic networks, and the train/test experiment protocol.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cvxbn/baselines.hpp"
#include "cvxbn/core_model.hpp"

namespace cvxbn {

/// First row: variable names. Domains are distinct values per column in
/// first-appearance order.
Dataset parse_csv(std::string_view text);
Dataset load_csv(const std::string& path);
std::string format_csv(const Dataset& data);
void save_csv(const Dataset& data, const std::string& path);

/// Re-indexes `data` against fixed domains (matched by variable name and
/// value label). Throws InputError on a missing variable or unseen value.
Dataset conform(const Dataset& data, std::span<const VariableDomain> domains);

/// Seeded shuffle; the first `train_count` shuffled rows form the training
/// part. Row order inside each part follows the original file.
std::pair<Dataset, Dataset> split(const Dataset& data, std::size_t train_count, std::uint64_t seed);
std::pair<Dataset, Dataset> split(const Dataset& data, double train_ratio, std::uint64_t seed);

struct SyntheticSpec {
  std::size_t n = 5;
  std::size_t edges = 4;
  int cardinality = 2;
  double concentration = 1.0;  // symmetric Dirichlet
  std::uint64_t seed = 0;
};

struct SyntheticNet {
  BayesNet net;
  ParentSets parents;
  std::vector<int> order;
};

SyntheticNet generate_synthetic(const SyntheticSpec& spec);

/// Learner names. The "-reopt" convex variants round with re-minimized
/// weights; "truth" is the generating network (synthetic data only).
const std::vector<std::string>& known_learners();

struct ExperimentDataset {
  std::string name;
  std::optional<SyntheticSpec> synthetic;  // otherwise `data` is partitioned
  Dataset data;
};

struct ExperimentSpec {
  std::vector<std::string> learners{"convex", "k2-bic"};
  std::size_t train = 50;
  std::size_t test = 1000;
  std::size_t repeats = 10;
  std::vector<double> beta_grid{0.01, 0.1, 1.0, 10.0};
  std::uint64_t seed = 1;
  std::vector<ExperimentDataset> datasets;
};

struct CellResult {
  std::vector<double> losses;  // one per successful repeat
  std::vector<double> seconds;
  std::size_t failures = 0;
  std::string last_error;
  double beta = 0.0;  // selected value for convex learners, else 0

  double mean() const;
  double sd() const;  // sample standard deviation; 0 with fewer than two values
  double mean_seconds() const;
};

struct ExperimentResult {
  std::vector<std::string> learners;
  std::vector<std::string> datasets;
  std::vector<std::vector<CellResult>> cells;  // [dataset][learner]
};

/// Progress callback receives short status lines.
ExperimentResult run_experiment(const ExperimentSpec& spec,
                                const std::function<void(const std::string&)>& progress = {});

/// Header of learner names, one `mean±sd` row per dataset. Contains no
/// timing so reruns are byte-identical.
std::string format_results(const ExperimentResult& result);
/// The mean-runtime row, in seconds.
std::string format_runtimes(const ExperimentResult& result);
/// Aligned table with both loss and runtime rows.
std::string format_table(const ExperimentResult& result);

/// Learns one network with a named learner. `order` is used by the
/// order-given learners; `truth` only by "truth".
BayesNet fit_learner(const std::string& learner, const Dataset& train, std::span<const int> order,
                     double beta, std::uint64_t seed, const BayesNet* truth = nullptr);

}  // namespace cvxbn
