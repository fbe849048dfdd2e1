#include "cvxbn/featuregen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "cvxbn/errors.hpp"

namespace cvxbn {

AugmentedMatrix augment(const Dataset& data, int child, std::span<const int> candidates) {
  const std::size_t n = data.vars();
  if (child < 0 || static_cast<std::size_t>(child) >= n) throw InputError("child out of range");
  AugmentedMatrix m;
  m.child = child;
  m.cardinality = data.domain(child).cardinality();
  m.candidates.assign(candidates.begin(), candidates.end());
  std::sort(m.candidates.begin(), m.candidates.end());
  for (int c : m.candidates)
    if (c == child || c < 0 || static_cast<std::size_t>(c) >= n)
      throw InputError("invalid candidate parent");
  m.source_rows = data.rows();
  m.width = n;
  m.cells.reserve(m.rows() * n);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    auto src = data.row(r);
    for (int a = 0; a < m.cardinality; ++a) {
      m.cells.insert(m.cells.end(), src.begin(), src.end());
      m.cells[m.cells.size() - n + child] = a;
    }
  }
  return m;
}

std::vector<double> AugmentedMatrix::response(const FeaturePattern& pattern) const {
  std::vector<double> out(rows(), 0.0);
  for (std::size_t r = 0; r < rows(); ++r) {
    auto rr = row(r);
    bool hit = pattern.parents_match(rr);
    if (hit && pattern.child_value) hit = rr[pattern.child] == *pattern.child_value;
    out[r] = hit ? 1.0 : 0.0;
  }
  return out;
}

SpanTracker::SpanTracker(std::size_t dimension, double tolerance)
    : dimension_(dimension), tolerance_(tolerance) {}

SpanTracker::SpanTracker(std::size_t dimension)
    : SpanTracker(dimension, 1e-9 * std::sqrt(static_cast<double>(dimension))) {}

std::vector<double> SpanTracker::residual(std::span<const double> response) const {
  std::vector<double> v(response.begin(), response.end());
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& q : basis_) {
      double dot = 0.0;
      for (std::size_t i = 0; i < dimension_; ++i) dot += q[i] * v[i];
      for (std::size_t i = 0; i < dimension_; ++i) v[i] -= dot * q[i];
    }
  }
  return v;
}

namespace {
double norm2(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}
}  // namespace

bool SpanTracker::add(std::span<const double> response) {
  if (response.size() != dimension_) throw InputError("response length mismatch");
  if (basis_.size() >= dimension_) return false;
  const double scale = norm2(response);
  if (scale == 0.0) return false;
  auto v = residual(response);
  const double rn = norm2(v);
  if (!(rn > tolerance_ * scale)) return false;
  for (double& x : v) x /= rn;
  basis_.push_back(std::move(v));
  return true;
}

bool SpanTracker::contains(std::span<const double> response) const {
  if (response.size() != dimension_) throw InputError("response length mismatch");
  const double scale = norm2(response);
  if (scale == 0.0) return true;
  return !(norm2(residual(response)) > tolerance_ * scale);
}

RankAddResult rank_add(SpanTracker& tracker, std::span<const double> response) {
  const bool ok = tracker.add(response);
  return {ok, tracker.rank()};
}

namespace {

// Sorted (variable, value) list; the child may appear like any other variable.
using Assignment = std::vector<std::pair<int, int>>;

FeaturePattern to_pattern(const Assignment& asg, int child) {
  FeaturePattern p;
  p.child = child;
  for (auto [var, val] : asg) {
    if (var == child) {
      p.child_value = val;
    } else {
      p.parents.push_back(var);
      p.parent_values.push_back(val);
    }
  }
  return p;
}

}  // namespace

FeatureGenResult generate_features_detailed(const Dataset& data, int child,
                                            std::span<const int> candidates,
                                            const FeatureGenOptions& options) {
  const AugmentedMatrix aug = augment(data, child, candidates);
  const std::size_t dim = aug.rows();
  const std::size_t cap = options.cap ? options.cap : 10 * dim;

  std::vector<int> vars = aug.candidates;
  vars.push_back(child);
  std::sort(vars.begin(), vars.end());

  SpanTracker tracker(dim);
  FeatureGenResult result;
  std::set<Assignment> seen;

  std::vector<Assignment> previous{Assignment{}};
  tracker.add(aug.response(to_pattern({}, child)));
  seen.insert(Assignment{});
  result.kept.push_back(to_pattern({}, child));

  while (true) {
    const std::size_t rank_before = tracker.rank();
    std::vector<Assignment> level;
    std::set<Assignment> level_set;
    for (const auto& base : previous) {
      // Batch of single-variable extensions of this surviving pattern.
      std::vector<Assignment> batch;
      for (int var : vars) {
        const bool used = std::any_of(base.begin(), base.end(),
                                      [var](const auto& kv) { return kv.first == var; });
        if (used) continue;
        for (int val = 0; val < data.domain(var).cardinality(); ++val) {
          Assignment ext = base;
          ext.emplace_back(var, val);
          std::sort(ext.begin(), ext.end());
          if (level_set.count(ext)) continue;
          batch.push_back(std::move(ext));
        }
      }
      std::sort(batch.begin(), batch.end());
      batch.erase(std::unique(batch.begin(), batch.end()), batch.end());
      if (batch.empty()) continue;

      bool raised = false;
      for (const auto& ext : batch)
        if (tracker.add(aug.response(to_pattern(ext, child)))) raised = true;
      if (raised) {
        for (auto& ext : batch) {
          level_set.insert(ext);
          level.push_back(ext);
        }
      } else {
        for (const auto& ext : batch)
          if (!seen.count(ext)) result.pruned.push_back(to_pattern(ext, child));
      }
      for (auto& ext : batch) seen.insert(ext);
    }
    if (tracker.rank() == rank_before) break;
    ++result.levels;
    std::sort(level.begin(), level.end());
    for (const auto& asg : level) {
      auto pat = to_pattern(asg, child);
      if (pat.child_value) result.features.push_back(pat);
      result.kept.push_back(std::move(pat));
    }
    if (result.features.size() > cap)
      throw CapacityError("generated feature count exceeds cap");
    previous = std::move(level);
  }

  // A pattern pruned in one batch may have been kept via another parent pattern.
  std::set<FeaturePattern> kept_set(result.kept.begin(), result.kept.end());
  std::erase_if(result.pruned, [&](const FeaturePattern& p) { return kept_set.count(p) > 0; });
  std::sort(result.pruned.begin(), result.pruned.end());
  result.pruned.erase(std::unique(result.pruned.begin(), result.pruned.end()),
                      result.pruned.end());
  result.rank = tracker.rank();
  return result;
}

std::vector<FeaturePattern> generate_features(const Dataset& data, int child,
                                              std::span<const int> candidates,
                                              const FeatureGenOptions& options) {
  return generate_features_detailed(data, child, candidates, options).features;
}

std::vector<FeaturePattern> exhaustive_patterns(std::span<const VariableDomain> domains, int child,
                                                std::span<const int> candidates) {
  std::vector<int> cand(candidates.begin(), candidates.end());
  std::sort(cand.begin(), cand.end());
  if (cand.size() > 20) throw CapacityError("too many candidates for exhaustive enumeration");
  std::vector<FeaturePattern> out;
  const int V = domains[child].cardinality();
  for (std::uint32_t mask = 0; mask < (1u << cand.size()); ++mask) {
    std::vector<int> parents;
    for (std::size_t k = 0; k < cand.size(); ++k)
      if (mask & (1u << k)) parents.push_back(cand[k]);
    std::size_t configs = 1;
    for (int p : parents) configs *= domains[p].cardinality();
    for (std::size_t c = 0; c < configs; ++c) {
      std::vector<int> values(parents.size());
      std::size_t rem = c;
      for (std::size_t k = parents.size(); k-- > 0;) {
        values[k] = static_cast<int>(rem % domains[parents[k]].cardinality());
        rem /= domains[parents[k]].cardinality();
      }
      for (int a = 0; a < V; ++a) out.push_back(FeaturePattern{child, a, parents, values});
    }
  }
  return out;
}

bool verify_span(std::span<const FeaturePattern> features,
                 std::span<const FeaturePattern> reference, const AugmentedMatrix& augmented) {
  SpanTracker tracker(augmented.rows());
  // Per-configuration constants: indicator of all replicas of source rows
  // sharing one candidate configuration.
  std::map<std::vector<int>, std::vector<double>> constants;
  for (std::size_t r = 0; r < augmented.source_rows; ++r) {
    auto src = augmented.row(r * augmented.cardinality);
    std::vector<int> key;
    for (int c : augmented.candidates) key.push_back(src[c]);
    auto& vec = constants[key];
    if (vec.empty()) vec.assign(augmented.rows(), 0.0);
    for (int a = 0; a < augmented.cardinality; ++a) vec[r * augmented.cardinality + a] = 1.0;
  }
  for (const auto& [key, vec] : constants) tracker.add(vec);
  for (const auto& f : features) tracker.add(augmented.response(f));
  for (const auto& f : reference)
    if (!tracker.contains(augmented.response(f))) return false;
  return true;
}

std::vector<std::vector<int>> candidate_sets(std::size_t n, std::span<const int> order) {
  std::vector<std::vector<int>> out(n);
  if (order.empty()) {
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i)
        if (i != j) out[j].push_back(static_cast<int>(i));
    return out;
  }
  if (order.size() != n) throw InputError("order must list every variable");
  for (std::size_t k = 0; k < n; ++k) {
    out[order[k]].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(out[order[k]].begin(), out[order[k]].end());
  }
  return out;
}

std::vector<std::vector<FeaturePattern>> generate_all_features(
    const Dataset& data, std::span<const std::vector<int>> candidates,
    const FeatureGenOptions& options) {
  const auto n = static_cast<std::ptrdiff_t>(candidates.size());
  std::vector<std::vector<FeaturePattern>> out(candidates.size());
  std::vector<std::exception_ptr> errors(candidates.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    try {
      out[j] = generate_features(data, static_cast<int>(j), candidates[j], options);
    } catch (...) {
      errors[j] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace serial {

std::vector<std::vector<FeaturePattern>> generate_all_features(
    const Dataset& data, std::span<const std::vector<int>> candidates,
    const FeatureGenOptions& options) {
  std::vector<std::vector<FeaturePattern>> out;
  for (std::size_t j = 0; j < candidates.size(); ++j)
    out.push_back(generate_features(data, static_cast<int>(j), candidates[j], options));
  return out;
}

}  // namespace serial

}  // namespace cvxbn
