#include "cvxbn/mdl_selection.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "cvxbn/errors.hpp"
#include "cvxbn/featuregen.hpp"
#include "cvxbn/optim.hpp"

namespace cvxbn {

double feature_cost(const FeaturePattern& pattern, std::span<const VariableDomain> domains,
                    std::size_t n) {
  double c = static_cast<double>(pattern.parents.size()) * std::log(static_cast<double>(n));
  c += std::log(static_cast<double>(domains[pattern.child].cardinality()));
  for (int p : pattern.parents) c += std::log(static_cast<double>(domains[p].cardinality()));
  return c;
}

DescriptionCost description_costs(std::span<const FeaturePattern> features,
                                  std::span<const VariableDomain> domains, std::size_t n,
                                  std::size_t T) {
  DescriptionCost out;
  out.per_weight = 0.5 * std::log(static_cast<double>(T));
  out.structure.reserve(features.size());
  for (const auto& f : features) out.structure.push_back(feature_cost(f, domains, n));
  return out;
}

std::vector<FeaturePattern> MdlProblem::all_features() const {
  std::vector<FeaturePattern> out;
  out.reserve(feature_count);
  for (const auto& block : children)
    out.insert(out.end(), block.features.begin(), block.features.end());
  return out;
}

MdlProblem build_problem(const Dataset& data, std::span<const std::vector<FeaturePattern>> features,
                         double beta) {
  if (!(beta > 0.0)) throw InputError("beta must be positive");
  if (features.size() != data.vars()) throw InputError("one feature list per variable required");
  MdlProblem problem;
  problem.beta = beta;
  problem.rows = data.rows();
  for (std::size_t j = 0; j < features.size(); ++j) {
    ChildBlock block;
    block.child = static_cast<int>(j);
    block.offset = problem.feature_count;
    block.features = features[j];
    block.stats = collect_stats(data, block.child, block.features);
    problem.feature_count += block.features.size();
    problem.children.push_back(std::move(block));
  }
  const auto all = problem.all_features();
  problem.costs = description_costs(all, data.domains(), data.vars(), data.rows());
  return problem;
}

namespace {

struct ChildEval {
  double value = 0.0;
  std::vector<double> weights;
  DualParams theta;
  std::vector<double> delta;
};

ChildEval evaluate_child(const MdlProblem& problem, const ChildBlock& block,
                         std::span<const double> eta, const GEvalOptions& options) {
  const std::size_t F = block.features.size();
  std::vector<double> scale(F);
  for (std::size_t f = 0; f < F; ++f) scale[f] = std::sqrt(std::max(0.0, eta[block.offset + f]));

  RegularizationConfig cfg = options.newton;
  cfg.beta = problem.beta;
  NewtonOptions nopt;
  nopt.scale = scale;
  if (!options.warm_start.empty() && options.warm_start[block.child].size() == F)
    nopt.warm_start = options.warm_start[block.child];

  ChildEval out;
  out.weights = newton_solve(block.stats, cfg, nopt);
  out.value = regularized_loss(out.weights, block.stats, problem.beta, scale).value;
  out.theta = model_conditionals(out.weights, block.stats, scale);
  out.delta = dual_residual(out.theta, block.stats);
  return out;
}

void check_eta(const MdlProblem& problem, std::span<const double> eta) {
  if (eta.size() != problem.feature_count) throw InputError("eta length mismatch");
  for (double v : eta)
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("eta must lie in [0, 1]");
}

GEval assemble(const MdlProblem& problem, std::span<const double> eta,
               std::vector<ChildEval>& parts) {
  GEval out;
  out.gradient.assign(problem.feature_count, 0.0);
  const double pw = problem.costs.per_weight;
  for (std::size_t f = 0; f < problem.feature_count; ++f)
    out.value += (problem.costs.structure[f] + pw) * eta[f];
  for (std::size_t j = 0; j < problem.children.size(); ++j) {
    const auto& block = problem.children[j];
    auto& part = parts[j];
    out.value += part.value;
    for (std::size_t f = 0; f < block.features.size(); ++f) {
      const double d = part.delta[f];
      out.gradient[block.offset + f] =
          problem.costs.structure[block.offset + f] + pw - d * d / (2.0 * problem.beta);
    }
    out.weights.push_back(std::move(part.weights));
    out.theta.push_back(std::move(part.theta));
  }
  return out;
}

}  // namespace

GEval g_eta(const MdlProblem& problem, std::span<const double> eta, const GEvalOptions& options) {
  check_eta(problem, eta);
  const auto n = static_cast<std::ptrdiff_t>(problem.children.size());
  std::vector<ChildEval> parts(problem.children.size());
  std::vector<std::exception_ptr> errors(problem.children.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    try {
      parts[j] = evaluate_child(problem, problem.children[j], eta, options);
    } catch (...) {
      errors[j] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return assemble(problem, eta, parts);
}

namespace serial {

GEval g_eta(const MdlProblem& problem, std::span<const double> eta, const GEvalOptions& options) {
  check_eta(problem, eta);
  std::vector<ChildEval> parts;
  for (const auto& block : problem.children)
    parts.push_back(evaluate_child(problem, block, eta, options));
  return assemble(problem, eta, parts);
}

}  // namespace serial

double mdl_objective(const MdlProblem& problem, std::span<const double> eta01,
                     const RegularizationConfig& newton) {
  if (eta01.size() != problem.feature_count) throw InputError("eta length mismatch");
  double value = 0.0;
  const double pw = problem.costs.per_weight;
  for (const auto& block : problem.children) {
    // Independent route: fresh statistics over only the selected features.
    std::vector<FeaturePattern> selected;
    for (std::size_t f = 0; f < block.features.size(); ++f) {
      const double e = eta01[block.offset + f];
      if (e != 0.0 && e != 1.0) throw InputError("mdl_objective needs an integral selection");
      if (e == 1.0) {
        selected.push_back(block.features[f]);
        value += problem.costs.structure[block.offset + f] + pw;
      }
    }
    SufficientStats stats;
    stats.child = block.child;
    stats.cardinality = block.stats.cardinality;
    stats.feature_count = selected.size();
    stats.total = block.stats.total;
    stats.parent_union = block.stats.parent_union;
    // Re-derive active lists from group keys.
    for (const auto& g : block.stats.groups) {
      ConfigGroup ng;
      ng.key = g.key;
      ng.count = g.count;
      ng.child_counts = g.child_counts;
      ng.active.assign(stats.cardinality, {});
      const int width =
          stats.parent_union.empty() ? 0 : stats.parent_union.back() + 1;
      std::vector<int> row(static_cast<std::size_t>(width), 0);
      for (std::size_t k = 0; k < g.key.size(); ++k) row[stats.parent_union[k]] = g.key[k];
      for (std::size_t f = 0; f < selected.size(); ++f) {
        const auto& pat = selected[f];
        if (!pat.parents_match(row)) continue;
        ng.active[*pat.child_value].push_back(static_cast<int>(f));
      }
      stats.groups.push_back(std::move(ng));
    }
    RegularizationConfig cfg = newton;
    cfg.beta = problem.beta;
    const auto w = newton_solve(stats, cfg);
    value += regularized_loss(w, stats, problem.beta).value;
  }
  return value;
}

MinimizeGResult minimize_g(const MdlProblem& problem, std::vector<double> initial,
                           const MinimizeGOptions& options) {
  check_eta(problem, initial);
  std::vector<std::vector<double>> warm;
  ObjectiveFn fn = [&](std::span<const double> eta) {
    GEvalOptions gopt;
    gopt.warm_start = warm;
    GEval ev = g_eta(problem, eta, gopt);
    warm = ev.weights;
    return Objective{ev.value, std::move(ev.gradient)};
  };

  MinimizeGResult result;
  QuasiNewtonOptions qn;
  qn.lower.assign(problem.feature_count, 0.0);
  qn.upper.assign(problem.feature_count, 1.0);
  qn.gradient_tolerance = options.gradient_tolerance;
  qn.max_iterations = options.max_iterations;
  qn.max_backtracks = options.max_backtracks;
  qn.on_iteration = [&](int it, double value, double pg) {
    TraceLine line{it, value, pg};
    result.trace.push_back(line);
    if (options.on_iteration) options.on_iteration(line);
  };
  const auto qres = minimize_quasi_newton(fn, std::move(initial), qn);
  result.eta = qres.x;
  result.value = qres.value;
  result.converged = qres.converged;
  result.at_solution = g_eta(problem, result.eta);
  return result;
}

namespace {

double fixed_coefficient_loss(const ChildBlock& block, std::span<const double> coef) {
  return data_loss(coef, block.stats);
}

}  // namespace

RoundResult greedy_round(const MdlProblem& problem, std::span<const double> soft_eta,
                         const GEval& soft_eval, const ConsistencyChecker& checker,
                         const RegularizationConfig& newton, RoundingRule rule) {
  check_eta(problem, soft_eta);
  const std::size_t F = problem.feature_count;
  std::vector<double> eta(soft_eta.begin(), soft_eta.end());

  // Effective coefficients of the soft model, and the owning block per feature.
  std::vector<std::vector<double>> coef(problem.children.size());
  std::vector<std::vector<double>> warm(problem.children.size());
  std::vector<std::size_t> owner(F);
  for (std::size_t j = 0; j < problem.children.size(); ++j) {
    const auto& block = problem.children[j];
    coef[j].resize(block.features.size());
    warm[j] = soft_eval.weights[j];
    for (std::size_t f = 0; f < block.features.size(); ++f) {
      coef[j][f] = std::sqrt(eta[block.offset + f]) * soft_eval.weights[j][f];
      owner[block.offset + f] = j;
    }
  }

  RegularizationConfig cfg = newton;
  cfg.beta = problem.beta;
  // Minimized block loss with the current eta except component f set to v.
  auto block_min = [&](std::size_t j, std::size_t f, double v) {
    const auto& block = problem.children[j];
    std::vector<double> scale(block.features.size());
    for (std::size_t k = 0; k < scale.size(); ++k) scale[k] = std::sqrt(eta[block.offset + k]);
    scale[f - block.offset] = std::sqrt(v);
    NewtonOptions nopt;
    nopt.scale = scale;
    nopt.warm_start = warm[j];
    auto w = newton_solve(block.stats, cfg, nopt);
    const double value = regularized_loss(w, block.stats, problem.beta, scale).value;
    return std::make_pair(value, std::move(w));
  };

  std::vector<std::size_t> order(F);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return eta[a] > eta[b]; });

  const double pw = problem.costs.per_weight;
  for (std::size_t f : order) {
    if (eta[f] == 0.0) continue;
    const std::size_t j = owner[f];
    const auto& block = problem.children[j];
    const std::size_t local = f - block.offset;
    if (checker && !checker(f, eta)) {
      eta[f] = 0.0;
      coef[j][local] = 0.0;
      continue;
    }
    if (eta[f] == 1.0) continue;
    if (rule == RoundingRule::Reoptimized) {
      auto [on_loss, on_w] = block_min(j, f, 1.0);
      auto [off_loss, off_w] = block_min(j, f, 0.0);
      const double on = problem.costs.structure[f] + pw + on_loss;
      if (on < off_loss) {
        eta[f] = 1.0;
        warm[j] = std::move(on_w);
      } else {
        eta[f] = 0.0;
        warm[j] = std::move(off_w);
      }
      continue;
    }
    const double w = coef[j][local];
    const double on = problem.costs.structure[f] + pw + 0.5 * problem.beta * w * w +
                      fixed_coefficient_loss(block, coef[j]);
    coef[j][local] = 0.0;
    const double off = fixed_coefficient_loss(block, coef[j]);
    if (on < off) {
      eta[f] = 1.0;
      coef[j][local] = w;
    } else {
      eta[f] = 0.0;
    }
  }

  RoundResult out;
  out.eta = eta;
  for (const auto& block : problem.children) {
    NewtonOptions nopt;
    nopt.scale = std::span<const double>(out.eta).subspan(block.offset, block.features.size());
    out.weights.push_back(newton_solve(block.stats, cfg, nopt));
  }
  return out;
}

BayesNet assemble_net(const Dataset& data, const MdlProblem& problem,
                      std::span<const double> eta01,
                      std::span<const std::vector<double>> weights, std::vector<int> order) {
  std::vector<LocalModel> locals;
  for (std::size_t j = 0; j < problem.children.size(); ++j) {
    const auto& block = problem.children[j];
    LocalModel local;
    local.child = block.child;
    local.cardinality = data.domain(block.child).cardinality();
    for (std::size_t f = 0; f < block.features.size(); ++f) {
      if (eta01[block.offset + f] != 1.0) continue;
      local.features.push_back(block.features[f]);
      local.weights.push_back(weights[j][f]);
    }
    locals.push_back(std::move(local));
  }
  return BayesNet(data.domains(), std::move(locals), std::move(order));
}

MdlSolution learn_fixed_order(const Dataset& data, std::span<const int> order, double beta,
                              const MinimizeGOptions& options, RoundingRule rounding) {
  const std::size_t n = data.vars();
  const auto candidates = candidate_sets(n, order);
  const auto features = generate_all_features(data, candidates);

  MdlSolution sol;
  sol.problem = build_problem(data, features, beta);
  std::vector<double> start(sol.problem.feature_count, 0.5);
  GEval at;
  try {
    auto res = minimize_g(sol.problem, start, options);
    sol.soft_eta = std::move(res.eta);
    sol.trace = std::move(res.trace);
    at = std::move(res.at_solution);
  } catch (const StallError& stall) {
    sol.soft_eta = stall.best_iterate();
    at = g_eta(sol.problem, sol.soft_eta);
  }
  sol.soft_value = at.value;
  auto rounded = greedy_round(sol.problem, sol.soft_eta, at, {}, {}, rounding);
  sol.rounded_eta = rounded.eta;
  sol.net = assemble_net(data, sol.problem, rounded.eta, rounded.weights,
                         std::vector<int>(order.begin(), order.end()));
  return sol;
}

}  // namespace cvxbn
