#include "cvxbn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cvxbn/errors.hpp"
#include "cvxbn/random.hpp"

namespace cvxbn {

FamilyCounts family_counts(const Dataset& data, int child, std::span<const int> parents,
                           std::size_t config_cap) {
  FamilyCounts fc;
  fc.cardinality = data.domain(child).cardinality();
  std::vector<std::size_t> radix;
  for (int p : parents) {
    const auto card = static_cast<std::size_t>(data.domain(p).cardinality());
    if (fc.configs > config_cap / card) throw CapacityError("parent configuration count exceeds cap");
    fc.configs *= card;
    radix.push_back(card);
  }
  fc.counts.assign(fc.configs * static_cast<std::size_t>(fc.cardinality), 0);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    std::size_t b = 0;
    for (std::size_t k = 0; k < parents.size(); ++k)
      b = b * radix[k] + static_cast<std::size_t>(data.at(r, parents[k]));
    ++fc.counts[b * fc.cardinality + data.at(r, child)];
  }
  return fc;
}

double bic_local(const Dataset& data, int child, std::span<const int> parents,
                 std::size_t config_cap) {
  const auto fc = family_counts(data, child, parents, config_cap);
  const auto V = static_cast<std::size_t>(fc.cardinality);
  double ll = 0.0;
  for (std::size_t b = 0; b < fc.configs; ++b) {
    std::size_t nb = 0;
    for (std::size_t a = 0; a < V; ++a) nb += fc.counts[b * V + a];
    for (std::size_t a = 0; a < V; ++a) {
      const auto nab = fc.counts[b * V + a];
      if (nab > 0)
        ll += static_cast<double>(nab) * std::log(static_cast<double>(nab) / static_cast<double>(nb));
    }
  }
  const double d = static_cast<double>(V - 1) * static_cast<double>(fc.configs);
  const double T = static_cast<double>(data.rows());
  return T > 0 ? ll - 0.5 * d * std::log(T) : 0.0;
}

double bde_local(const Dataset& data, int child, std::span<const int> parents, double ess,
                 std::size_t config_cap) {
  if (!(ess > 0.0)) throw InputError("equivalent sample size must be positive");
  const auto fc = family_counts(data, child, parents, config_cap);
  const auto V = static_cast<std::size_t>(fc.cardinality);
  const double alpha_ab = ess / (static_cast<double>(V) * static_cast<double>(fc.configs));
  const double alpha_b = alpha_ab * static_cast<double>(V);
  double score = 0.0;
  for (std::size_t b = 0; b < fc.configs; ++b) {
    std::size_t nb = 0;
    for (std::size_t a = 0; a < V; ++a) nb += fc.counts[b * V + a];
    if (nb == 0) continue;
    score += std::lgamma(alpha_b) - std::lgamma(alpha_b + static_cast<double>(nb));
    for (std::size_t a = 0; a < V; ++a) {
      const auto nab = fc.counts[b * V + a];
      if (nab > 0) score += std::lgamma(alpha_ab + static_cast<double>(nab)) - std::lgamma(alpha_ab);
    }
  }
  return score;
}

double ScoreCache::local(int child, const std::vector<int>& parents) {
  auto key = std::make_pair(child, parents);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  const double s = kind_ == ScoreKind::Bic ? bic_local(*data_, child, parents)
                                           : bde_local(*data_, child, parents, ess_);
  memo_.emplace(std::move(key), s);
  return s;
}

double ScoreCache::total(const ParentSets& parents) {
  double s = 0.0;
  for (std::size_t j = 0; j < parents.size(); ++j) s += local(static_cast<int>(j), parents[j]);
  return s;
}

namespace {

LocalModel saturated_local(int child, int cardinality, std::span<const int> parents,
                           std::span<const int> parent_cards,
                           const std::vector<std::vector<double>>& table) {
  LocalModel local;
  local.child = child;
  local.cardinality = cardinality;
  for (std::size_t b = 0; b < table.size(); ++b) {
    std::vector<int> values(parents.size());
    std::size_t rem = b;
    for (std::size_t k = parents.size(); k-- > 0;) {
      values[k] = static_cast<int>(rem % static_cast<std::size_t>(parent_cards[k]));
      rem /= static_cast<std::size_t>(parent_cards[k]);
    }
    for (int a = 0; a < cardinality; ++a) {
      FeaturePattern pat;
      pat.child = child;
      pat.child_value = a;
      pat.parents.assign(parents.begin(), parents.end());
      pat.parent_values = values;
      local.features.push_back(std::move(pat));
      // Floor keeps the weight finite for a zero table entry.
      local.weights.push_back(std::log(std::max(table[b][a], 1e-300)));
    }
  }
  return local;
}

}  // namespace

BayesNet table_net(std::vector<VariableDomain> domains, const ParentSets& parents,
                   const std::vector<std::vector<std::vector<double>>>& tables,
                   std::vector<int> order) {
  if (parents.size() != domains.size() || tables.size() != domains.size())
    throw InputError("table_net: one parent set and table per variable required");
  std::vector<LocalModel> locals;
  for (std::size_t j = 0; j < domains.size(); ++j) {
    std::vector<int> cards;
    std::size_t configs = 1;
    for (int p : parents[j]) {
      cards.push_back(domains[p].cardinality());
      configs *= static_cast<std::size_t>(cards.back());
    }
    if (tables[j].size() != configs) throw InputError("table_net: table size mismatch");
    locals.push_back(saturated_local(static_cast<int>(j), domains[j].cardinality(), parents[j],
                                     cards, tables[j]));
  }
  return BayesNet(std::move(domains), std::move(locals), std::move(order));
}

BayesNet table_net(const Dataset& data, const ParentSets& parents, std::vector<int> order,
                   double pseudocount) {
  std::vector<std::vector<std::vector<double>>> tables(data.vars());
  for (std::size_t j = 0; j < data.vars(); ++j) {
    const auto fc = family_counts(data, static_cast<int>(j), parents[j]);
    const auto V = static_cast<std::size_t>(fc.cardinality);
    tables[j].resize(fc.configs);
    for (std::size_t b = 0; b < fc.configs; ++b) {
      double nb = 0.0;
      for (std::size_t a = 0; a < V; ++a) nb += static_cast<double>(fc.counts[b * V + a]);
      const double denom = nb + pseudocount * static_cast<double>(V);
      auto& row = tables[j][b];
      row.resize(V);
      for (std::size_t a = 0; a < V; ++a)
        row[a] = denom > 0.0 ? (static_cast<double>(fc.counts[b * V + a]) + pseudocount) / denom
                             : 1.0 / static_cast<double>(V);
    }
  }
  return table_net(data.domains(), parents, tables, std::move(order));
}

namespace {

std::vector<Edge> edges_of(const ParentSets& parents) {
  std::vector<Edge> edges;
  for (std::size_t j = 0; j < parents.size(); ++j)
    for (int p : parents[j]) edges.emplace_back(p, static_cast<int>(j));
  return edges;
}

// True if `to` is reachable from `from` along parent -> child edges.
bool reachable(const ParentSets& parents, int from, int to) {
  const std::size_t n = parents.size();
  std::vector<std::vector<int>> kids(n);
  for (std::size_t j = 0; j < n; ++j)
    for (int p : parents[j]) kids[p].push_back(static_cast<int>(j));
  std::vector<char> seen(n, 0);
  std::vector<int> stack{from};
  seen[from] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (v == to) return true;
    for (int k : kids[v])
      if (!seen[k]) {
        seen[k] = 1;
        stack.push_back(k);
      }
  }
  return false;
}

bool has_edge(const ParentSets& parents, int from, int to) {
  return std::binary_search(parents[to].begin(), parents[to].end(), from);
}

void add_edge(ParentSets& parents, int from, int to) {
  auto& ps = parents[to];
  ps.insert(std::lower_bound(ps.begin(), ps.end(), from), from);
}

void remove_edge(ParentSets& parents, int from, int to) {
  auto& ps = parents[to];
  ps.erase(std::lower_bound(ps.begin(), ps.end(), from));
}

std::vector<int> order_of(const ParentSets& parents) {
  const auto edges = edges_of(parents);
  auto order = topological_order(parents.size(), edges);
  if (order.size() != parents.size()) throw InvariantError("parent sets contain a cycle");
  return order;
}

}  // namespace

bool is_acyclic(const ParentSets& parents) {
  const auto edges = edges_of(parents);
  return topological_order(parents.size(), edges).size() == parents.size();
}

ParentSets k2_parents(const Dataset& data, std::span<const int> order, const K2Options& options) {
  const std::size_t n = data.vars();
  if (order.size() != n) throw InputError("order must list every variable once");
  std::vector<char> listed(n, 0);
  for (int v : order) {
    if (v < 0 || static_cast<std::size_t>(v) >= n || listed[v])
      throw InputError("order is not a permutation");
    listed[v] = 1;
  }
  const int cap = options.max_parents < 0 ? static_cast<int>(n) - 1 : options.max_parents;
  ScoreCache cache(data, options.score, options.ess);
  ParentSets parents(n);
  for (std::size_t k = 0; k < n; ++k) {
    const int child = order[k];
    auto& ps = parents[child];
    double current = cache.local(child, ps);
    while (static_cast<int>(ps.size()) < cap) {
      int best = -1;
      double best_score = current;
      for (std::size_t m = 0; m < k; ++m) {
        const int cand = order[m];
        if (std::binary_search(ps.begin(), ps.end(), cand)) continue;
        auto trial = ps;
        trial.insert(std::lower_bound(trial.begin(), trial.end(), cand), cand);
        const double s = cache.local(child, trial);
        if (s > best_score) {
          best_score = s;
          best = cand;
        }
      }
      if (best < 0) break;
      ps.insert(std::lower_bound(ps.begin(), ps.end(), best), best);
      current = best_score;
    }
  }
  return parents;
}

BayesNet k2_search(const Dataset& data, std::span<const int> order, const K2Options& options) {
  auto parents = k2_parents(data, order, options);
  return table_net(data, parents, std::vector<int>(order.begin(), order.end()));
}

HillClimbResult hill_climb_dag(const Dataset& data, const HillClimbOptions& options) {
  const int n = static_cast<int>(data.vars());
  const int perturb = options.perturbation < 0 ? n : options.perturbation;
  ScoreCache cache(data, options.score, options.ess);
  Rng rng(mix_seed(options.seed));

  ParentSets current(static_cast<std::size_t>(n));
  double score = cache.total(current);
  HillClimbResult best{current, score, 0};
  int restarts_left = options.restarts;

  while (true) {
    // Best single add / delete / reverse move; ties go to the first found.
    double best_delta = 0.0;
    int kind = -1, bi = -1, bj = -1;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double old_j = cache.local(j, current[j]);
        if (has_edge(current, i, j)) {
          auto pj = current[j];
          pj.erase(std::lower_bound(pj.begin(), pj.end(), i));
          const double del = cache.local(j, pj) - old_j;
          if (del > best_delta) {
            best_delta = del;
            kind = 1, bi = i, bj = j;
          }
          remove_edge(current, i, j);
          const bool can_reverse = !reachable(current, i, j);
          add_edge(current, i, j);
          if (can_reverse) {
            auto pi = current[i];
            pi.insert(std::lower_bound(pi.begin(), pi.end(), j), j);
            const double rev = del + cache.local(i, pi) - cache.local(i, current[i]);
            if (rev > best_delta) {
              best_delta = rev;
              kind = 2, bi = i, bj = j;
            }
          }
        } else if (!has_edge(current, j, i) && !reachable(current, j, i)) {
          auto pj = current[j];
          pj.insert(std::lower_bound(pj.begin(), pj.end(), i), i);
          const double add = cache.local(j, pj) - old_j;
          if (add > best_delta) {
            best_delta = add;
            kind = 0, bi = i, bj = j;
          }
        }
      }

    if (kind >= 0 && best_delta > 1e-12) {
      if (kind == 0) {
        add_edge(current, bi, bj);
      } else if (kind == 1) {
        remove_edge(current, bi, bj);
      } else {
        remove_edge(current, bi, bj);
        add_edge(current, bj, bi);
      }
      score = cache.total(current);
      ++best.moves;
      continue;
    }

    if (score > best.score) {
      best.score = score;
      best.parents = current;
    }
    if (restarts_left-- <= 0 || n < 2) break;
    // Random add / delete moves that keep the graph acyclic.
    int applied = 0;
    for (int attempt = 0; applied < perturb && attempt < 100 * std::max(perturb, 1); ++attempt) {
      const int i = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n)));
      const int j = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n)));
      if (i == j) continue;
      if (has_edge(current, i, j)) {
        remove_edge(current, i, j);
      } else if (!has_edge(current, j, i) && !reachable(current, j, i)) {
        add_edge(current, i, j);
      } else {
        continue;
      }
      ++applied;
    }
    score = cache.total(current);
  }
  if (!is_acyclic(best.parents)) throw InvariantError("hill climbing produced a cycle");
  return best;
}

BayesNet hill_climb(const Dataset& data, const HillClimbOptions& options) {
  auto res = hill_climb_dag(data, options);
  auto order = order_of(res.parents);
  return table_net(data, res.parents, std::move(order));
}

}  // namespace cvxbn
