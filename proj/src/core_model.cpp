#include "cvxbn/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cvxbn/errors.hpp"
#include "cvxbn/numeric.hpp"
#include "cvxbn/random.hpp"

namespace cvxbn {

int VariableDomain::index_of(std::string_view label) const noexcept {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] == label) return static_cast<int>(i);
  return -1;
}

Dataset::Dataset(std::vector<VariableDomain> domains, std::vector<int> cells)
    : domains_(std::move(domains)), cells_(std::move(cells)) {
  const std::size_t n = domains_.size();
  if (n == 0) throw InputError("dataset has no variables");
  if (cells_.size() % n != 0) throw InputError("dataset cell count is not a multiple of n");
  rows_ = cells_.size() / n;
  for (const auto& d : domains_)
    if (d.cardinality() < 1) throw InputError("variable '" + d.name + "' has an empty domain");
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const int v = cells_[r * n + c];
      if (v < 0 || v >= domains_[c].cardinality())
        throw InputError("value index out of range at row " + std::to_string(r) + ", column " +
                         std::to_string(c));
    }
}

Dataset Dataset::subset(std::span<const std::size_t> row_ids) const {
  std::vector<int> cells;
  cells.reserve(row_ids.size() * vars());
  for (std::size_t r : row_ids) {
    if (r >= rows_) throw InputError("subset row out of range");
    auto rr = row(r);
    cells.insert(cells.end(), rr.begin(), rr.end());
  }
  return Dataset(domains_, std::move(cells));
}

bool FeaturePattern::parents_match(std::span<const int> row) const noexcept {
  for (std::size_t k = 0; k < parents.size(); ++k)
    if (row[parents[k]] != parent_values[k]) return false;
  return true;
}

void FeaturePattern::validate(std::size_t n) const {
  if (child < 0 || static_cast<std::size_t>(child) >= n)
    throw InputError("feature child index out of range");
  if (parents.size() != parent_values.size())
    throw InputError("feature parent/value length mismatch");
  for (std::size_t k = 0; k < parents.size(); ++k) {
    if (parents[k] < 0 || static_cast<std::size_t>(parents[k]) >= n)
      throw InputError("feature parent index out of range");
    if (parents[k] == child) throw InputError("feature lists its child as a parent");
    if (k > 0 && parents[k] <= parents[k - 1])
      throw InputError("feature parents are not strictly increasing");
  }
}

int evaluate_feature(const FeaturePattern& pattern, std::span<const int> row) {
  pattern.validate(row.size());
  int product = 1;
  if (pattern.child_value) product *= (row[pattern.child] == *pattern.child_value) ? 1 : 0;
  for (std::size_t k = 0; k < pattern.parents.size(); ++k)
    product *= (row[pattern.parents[k]] == pattern.parent_values[k]) ? 1 : 0;
  return product;
}

std::vector<int> LocalModel::parent_union() const {
  std::vector<int> out;
  for (const auto& f : features) out.insert(out.end(), f.parents.begin(), f.parents.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

void child_scores(const LocalModel& local, std::span<const int> row, std::span<double> scores) {
  std::fill(scores.begin(), scores.end(), 0.0);
  for (std::size_t f = 0; f < local.features.size(); ++f) {
    const auto& pat = local.features[f];
    if (!pat.child_value || !pat.parents_match(row)) continue;
    scores[*pat.child_value] += local.weights[f];
  }
}

void check_weights(const LocalModel& local) {
  if (local.weights.size() != local.features.size())
    throw InputError("local model weight/feature length mismatch");
  for (double w : local.weights)
    if (!std::isfinite(w)) throw NumericError("non-finite weight in local model");
}

}  // namespace

std::vector<double> local_conditional(const LocalModel& local, std::span<const int> parent_row) {
  check_weights(local);
  std::vector<double> p(local.cardinality);
  child_scores(local, parent_row, p);
  softmax_inplace(p);
  return p;
}

double local_log_prob(const LocalModel& local, std::span<const int> row) {
  double buf[16];
  std::vector<double> heap;
  std::span<double> scores;
  if (local.cardinality <= 16) {
    scores = std::span<double>(buf, local.cardinality);
  } else {
    heap.resize(local.cardinality);
    scores = heap;
  }
  child_scores(local, row, scores);
  return scores[row[local.child]] - log_sum_exp(scores);
}

CptView to_cpt(const LocalModel& local, std::span<const VariableDomain> domains,
               std::size_t config_cap) {
  check_weights(local);
  CptView view;
  view.child = local.child;
  view.parents = local.parent_union();
  std::size_t configs = 1;
  for (int p : view.parents) {
    const int card = domains[p].cardinality();
    view.parent_cardinalities.push_back(card);
    if (configs > config_cap / static_cast<std::size_t>(card))
      throw CapacityError("parent configuration count exceeds cap");
    configs *= card;
  }
  std::vector<int> row(domains.size(), 0);
  view.table.reserve(configs);
  for (std::size_t c = 0; c < configs; ++c) {
    std::size_t rem = c;
    for (std::size_t k = view.parents.size(); k-- > 0;) {
      row[view.parents[k]] = static_cast<int>(rem % view.parent_cardinalities[k]);
      rem /= view.parent_cardinalities[k];
    }
    view.table.push_back(local_conditional(local, row));
  }
  return view;
}

std::vector<int> topological_order(std::size_t n, std::span<const Edge> edges) {
  std::vector<std::vector<int>> out(n);
  std::vector<int> indeg(n, 0);
  for (auto [from, to] : edges) {
    out[from].push_back(to);
    ++indeg[to];
  }
  std::vector<int> ready, order;
  for (std::size_t v = 0; v < n; ++v)
    if (indeg[v] == 0) ready.push_back(static_cast<int>(v));
  while (!ready.empty()) {
    // Smallest ready index first so the order is deterministic.
    auto it = std::min_element(ready.begin(), ready.end());
    const int v = *it;
    ready.erase(it);
    order.push_back(v);
    for (int w : out[v])
      if (--indeg[w] == 0) ready.push_back(w);
  }
  if (order.size() != n) return {};
  return order;
}

bool same_domains(std::span<const VariableDomain> a, std::span<const VariableDomain> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || a[i].values != b[i].values) return false;
  return true;
}

BayesNet::BayesNet(std::vector<VariableDomain> domains, std::vector<LocalModel> locals,
                   std::vector<int> order)
    : domains_(std::move(domains)), locals_(std::move(locals)), order_(std::move(order)) {
  const std::size_t n = domains_.size();
  if (locals_.size() != n) throw InputError("one local model per variable required");
  if (order_.size() != n) throw InputError("order must be a permutation of the variables");
  std::vector<int> position(n, -1);
  for (std::size_t k = 0; k < n; ++k) {
    const int v = order_[k];
    if (v < 0 || static_cast<std::size_t>(v) >= n || position[v] != -1)
      throw InputError("order must be a permutation of the variables");
    position[v] = static_cast<int>(k);
  }
  for (std::size_t j = 0; j < n; ++j) {
    const auto& local = locals_[j];
    if (local.child != static_cast<int>(j)) throw InputError("local model child mismatch");
    if (local.cardinality != domains_[j].cardinality())
      throw InputError("local model cardinality mismatch");
    check_weights(local);
    for (const auto& f : local.features) {
      f.validate(n);
      if (f.child != local.child || !f.child_value)
        throw InputError("local model feature must reference its child value");
      if (*f.child_value < 0 || *f.child_value >= local.cardinality)
        throw InputError("feature child value out of range");
      for (std::size_t k = 0; k < f.parents.size(); ++k) {
        if (f.parent_values[k] < 0 || f.parent_values[k] >= domains_[f.parents[k]].cardinality())
          throw InputError("feature parent value out of range");
        if (position[f.parents[k]] >= position[j])
          throw InvariantError("parent " + std::to_string(f.parents[k]) +
                               " does not precede child " + std::to_string(j) + " in order");
      }
    }
  }
}

double BayesNet::log_prob(std::span<const int> row) const {
  double lp = 0.0;
  for (const auto& local : locals_) lp += local_log_prob(local, row);
  return lp;
}

namespace {

void check_compatible(const BayesNet& net, const Dataset& data) {
  if (!same_domains(net.domains(), data.domains()))
    throw InputError("dataset domains do not match the network");
  if (data.rows() == 0) throw InputError("dataset has no rows");
}

}  // namespace

double neg_loglik(const BayesNet& net, const Dataset& data) {
  check_compatible(net, data);
  const auto rows = static_cast<std::ptrdiff_t>(data.rows());
  std::vector<double> per_row(data.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) per_row[r] = -net.log_prob(data.row(r));
  // Fixed-order reduction keeps the result independent of thread count.
  double total = 0.0;
  for (double v : per_row) total += v;
  return total / static_cast<double>(data.rows());
}

namespace serial {

double neg_loglik(const BayesNet& net, const Dataset& data) {
  check_compatible(net, data);
  double total = 0.0;
  for (std::size_t r = 0; r < data.rows(); ++r) total -= net.log_prob(data.row(r));
  return total / static_cast<double>(data.rows());
}

}  // namespace serial

Dataset sample(const BayesNet& net, std::size_t count, std::uint64_t seed) {
  const std::size_t n = net.vars();
  Rng rng(mix_seed(seed));
  std::vector<int> cells(count * n, 0);
  std::vector<double> p;
  for (std::size_t r = 0; r < count; ++r) {
    std::span<int> row(cells.data() + r * n, n);
    for (int j : net.order()) {
      p = local_conditional(net.local(j), row);
      const double u = uniform01(rng);
      double acc = 0.0;
      int pick = static_cast<int>(p.size()) - 1;
      for (std::size_t a = 0; a < p.size(); ++a) {
        acc += p[a];
        if (u < acc) {
          pick = static_cast<int>(a);
          break;
        }
      }
      row[j] = pick;
    }
  }
  return Dataset(net.domains(), std::move(cells));
}

std::vector<Edge> extract_dag(const BayesNet& net) {
  std::vector<Edge> edges;
  for (const auto& local : net.locals())
    for (int p : local.parent_union()) edges.emplace_back(p, local.child);
  std::sort(edges.begin(), edges.end());
  if (topological_order(net.vars(), edges).empty())
    throw InvariantError("extracted graph contains a cycle");
  return edges;
}

}  // namespace cvxbn
