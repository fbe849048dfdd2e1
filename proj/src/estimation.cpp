#include "cvxbn/estimation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "cvxbn/errors.hpp"
#include "cvxbn/numeric.hpp"

namespace cvxbn {

namespace {

inline double scale_of(std::span<const double> scale, int f) {
  return scale.empty() ? 1.0 : scale[f];
}

// Child scores s_a = sum_{f active at (a, b)} scale_f u_f for one group.
void group_scores(const ConfigGroup& g, std::span<const double> u, std::span<const double> scale,
                  std::span<double> s) {
  for (std::size_t a = 0; a < s.size(); ++a) {
    double acc = 0.0;
    for (int f : g.active[a]) acc += scale_of(scale, f) * u[f];
    s[a] = acc;
  }
}

double norm2(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

std::vector<double> SufficientStats::mean_features(std::size_t group) const {
  std::vector<double> phibar(feature_count, 0.0);
  const auto& g = groups[group];
  for (int a = 0; a < cardinality; ++a) {
    const double frac = g.child_counts[a] / g.count;
    if (frac == 0.0) continue;
    for (int f : g.active[a]) phibar[f] += frac;
  }
  return phibar;
}

SufficientStats collect_stats(const Dataset& data, int child, std::span<const int> parent_union,
                              std::span<const FeaturePattern> features) {
  const std::size_t n = data.vars();
  if (child < 0 || static_cast<std::size_t>(child) >= n) throw InputError("child out of range");
  std::vector<char> in_union(n, 0);
  for (int p : parent_union) {
    if (p < 0 || static_cast<std::size_t>(p) >= n || p == child)
      throw InputError("invalid parent union entry");
    in_union[p] = 1;
  }
  for (const auto& f : features) {
    f.validate(n);
    if (f.child != child) throw InputError("feature belongs to a different child");
    for (int p : f.parents)
      if (!in_union[p]) throw InputError("feature parent outside the parent union");
  }

  SufficientStats stats;
  stats.child = child;
  stats.cardinality = data.domain(child).cardinality();
  stats.feature_count = features.size();
  stats.parent_union.assign(parent_union.begin(), parent_union.end());
  stats.total = static_cast<double>(data.rows());

  std::map<std::vector<int>, std::size_t> index;
  std::vector<std::size_t> representative;
  std::vector<int> key(parent_union.size());
  for (std::size_t r = 0; r < data.rows(); ++r) {
    auto row = data.row(r);
    for (std::size_t k = 0; k < parent_union.size(); ++k) key[k] = row[parent_union[k]];
    auto [it, inserted] = index.try_emplace(key, stats.groups.size());
    if (inserted) {
      ConfigGroup g;
      g.key = key;
      g.child_counts.assign(stats.cardinality, 0.0);
      stats.groups.push_back(std::move(g));
      representative.push_back(r);
    }
    auto& g = stats.groups[it->second];
    g.count += 1.0;
    g.child_counts[row[child]] += 1.0;
  }

  // Order groups by key so results do not depend on row order.
  std::vector<std::size_t> perm;
  for (auto& [k, idx] : index) perm.push_back(idx);
  std::vector<ConfigGroup> sorted;
  std::vector<std::size_t> sorted_rep;
  for (std::size_t idx : perm) {
    sorted.push_back(std::move(stats.groups[idx]));
    sorted_rep.push_back(representative[idx]);
  }
  stats.groups = std::move(sorted);

  for (std::size_t gi = 0; gi < stats.groups.size(); ++gi) {
    auto& g = stats.groups[gi];
    auto row = data.row(sorted_rep[gi]);
    g.active.assign(stats.cardinality, {});
    for (std::size_t f = 0; f < features.size(); ++f) {
      const auto& pat = features[f];
      if (!pat.parents_match(row)) continue;
      if (pat.child_value) {
        if (*pat.child_value < 0 || *pat.child_value >= stats.cardinality)
          throw InputError("feature child value out of range");
        g.active[*pat.child_value].push_back(static_cast<int>(f));
      } else {
        for (int a = 0; a < stats.cardinality; ++a) g.active[a].push_back(static_cast<int>(f));
      }
    }
  }
  return stats;
}

SufficientStats collect_stats(const Dataset& data, int child,
                              std::span<const FeaturePattern> features) {
  std::vector<int> parents;
  for (const auto& f : features) parents.insert(parents.end(), f.parents.begin(), f.parents.end());
  std::sort(parents.begin(), parents.end());
  parents.erase(std::unique(parents.begin(), parents.end()), parents.end());
  return collect_stats(data, child, parents, features);
}

double log_partition(std::span<const double> child_scores) { return log_sum_exp(child_scores); }

double log_partition(std::span<const double> weights, std::span<const FeaturePattern> features,
                     int cardinality, std::span<const int> parent_row) {
  std::vector<double> s(cardinality, 0.0);
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto& pat = features[f];
    if (!pat.parents_match(parent_row)) continue;
    if (pat.child_value) {
      s[*pat.child_value] += weights[f];
    } else {
      for (auto& v : s) v += weights[f];
    }
  }
  return log_sum_exp(s);
}

double data_loss(std::span<const double> weights, const SufficientStats& stats,
                 std::span<const double> scale) {
  std::vector<double> s(stats.cardinality);
  double value = 0.0;
  for (const auto& g : stats.groups) {
    group_scores(g, weights, scale, s);
    value += g.count * log_sum_exp(s);
    for (int a = 0; a < stats.cardinality; ++a) value -= g.child_counts[a] * s[a];
  }
  return value;
}

LossEval regularized_loss(std::span<const double> weights, const SufficientStats& stats,
                          double beta, std::span<const double> scale) {
  LossEval out;
  out.gradient.assign(stats.feature_count, 0.0);
  double reg = 0.0;
  for (std::size_t f = 0; f < stats.feature_count; ++f) {
    reg += weights[f] * weights[f];
    out.gradient[f] = beta * weights[f];
  }
  out.value = 0.5 * beta * reg;
  std::vector<double> s(stats.cardinality);
  for (const auto& g : stats.groups) {
    group_scores(g, weights, scale, s);
    const double lse = log_sum_exp(s);
    out.value += g.count * lse;
    for (int a = 0; a < stats.cardinality; ++a) {
      out.value -= g.child_counts[a] * s[a];
      const double coef = g.count * std::exp(s[a] - lse) - g.child_counts[a];
      if (coef == 0.0) continue;
      for (int f : g.active[a]) out.gradient[f] += coef * scale_of(scale, f);
    }
  }
  return out;
}

std::vector<std::vector<double>> model_conditionals(std::span<const double> weights,
                                                    const SufficientStats& stats,
                                                    std::span<const double> scale) {
  std::vector<std::vector<double>> theta(stats.groups.size(),
                                         std::vector<double>(stats.cardinality));
  for (std::size_t gi = 0; gi < stats.groups.size(); ++gi) {
    group_scores(stats.groups[gi], weights, scale, theta[gi]);
    softmax_inplace(theta[gi]);
  }
  return theta;
}

namespace {

// Rows sqrt(#b theta_a) (phi_a - m_b), so that G^T G = sum_b #b Cov_theta[phi | b].
Eigen::MatrixXd covariance_factor(std::span<const double> u, const SufficientStats& stats,
                                  std::span<const double> scale) {
  const auto F = static_cast<Eigen::Index>(stats.feature_count);
  const int V = stats.cardinality;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(stats.groups.size()) * V, F);
  std::vector<double> theta(V);
  Eigen::VectorXd mean(F);
  Eigen::Index row = 0;
  for (const auto& g : stats.groups) {
    group_scores(g, u, scale, theta);
    softmax_inplace(theta);
    mean.setZero();
    for (int a = 0; a < V; ++a)
      for (int f : g.active[a]) mean[f] += theta[a] * scale_of(scale, f);
    for (int a = 0; a < V; ++a, ++row) {
      const double w = std::sqrt(g.count * theta[a]);
      if (w == 0.0) continue;
      G.row(row) = -w * mean.transpose();
      for (int f : g.active[a]) G(row, f) += w * scale_of(scale, f);
    }
  }
  return G;
}

// Solves (beta I + G^T G) d = -grad through whichever side is smaller.
Eigen::VectorXd newton_direction(const Eigen::MatrixXd& G, const Eigen::VectorXd& grad,
                                 double beta, double condition_limit) {
  const double spectral_bound = G.squaredNorm();
  double ridge = beta;
  if ((beta + spectral_bound) / beta > condition_limit) ridge = spectral_bound / condition_limit;
  if (G.cols() <= G.rows()) {
    Eigen::MatrixXd H = G.transpose() * G;
    H.diagonal().array() += ridge;
    return H.ldlt().solve(-grad);
  }
  Eigen::MatrixXd K = G * G.transpose();
  K.diagonal().array() += ridge;
  const Eigen::VectorXd Gg = G * grad;
  const Eigen::VectorXd inner = K.ldlt().solve(Gg);
  return -(grad - G.transpose() * inner) / ridge;
}

}  // namespace

std::vector<double> newton_solve(const SufficientStats& stats, const RegularizationConfig& config,
                                 const NewtonOptions& options) {
  if (!(config.beta > 0.0)) throw InputError("beta must be positive");
  const std::size_t F = stats.feature_count;
  std::vector<double> u(F, 0.0);
  if (!options.warm_start.empty()) {
    if (options.warm_start.size() != F) throw InputError("warm start length mismatch");
    std::copy(options.warm_start.begin(), options.warm_start.end(), u.begin());
  }
  if (F == 0) return u;

  LossEval cur = regularized_loss(u, stats, config.beta, options.scale);
  double gnorm = norm2(cur.gradient);
  std::vector<double> trial(F);
  for (int it = 0; it <= config.max_iterations; ++it) {
    if (options.trace) {
      std::ostringstream line;
      line.precision(12);
      line << it << '\t' << cur.value << '\t' << gnorm;
      options.trace(line.str());
    }
    if (gnorm <= config.tolerance) return u;
    if (it == config.max_iterations) break;

    const Eigen::MatrixXd G = covariance_factor(u, stats, options.scale);
    const Eigen::Map<const Eigen::VectorXd> grad(cur.gradient.data(), static_cast<Eigen::Index>(F));
    Eigen::VectorXd d = newton_direction(G, grad, config.beta, config.condition_limit);
    double slope = grad.dot(d);
    if (!d.allFinite() || !(slope < 0.0)) {
      d = -grad;
      slope = -gnorm * gnorm;
    }

    double alpha = 1.0;
    bool accepted = false;
    LossEval next;
    for (int bt = 0; bt < 60; ++bt, alpha *= 0.5) {
      for (std::size_t f = 0; f < F; ++f) trial[f] = u[f] + alpha * d[static_cast<Eigen::Index>(f)];
      next = regularized_loss(trial, stats, config.beta, options.scale);
      if (next.value <= cur.value + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      // In the quadratic regime the decrease drops below rounding of the
      // objective; accept the full step if it shrinks the gradient.
      if (bt == 0 && -slope < 1e-10 * std::max(1.0, std::abs(cur.value)) &&
          norm2(next.gradient) < gnorm) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    u = trial;
    cur = std::move(next);
    gnorm = norm2(cur.gradient);
  }
  if (gnorm <= config.tolerance) return u;
  throw ConvergenceError("newton_solve did not reach gradient tolerance", gnorm);
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

std::vector<double> dual_residual(const DualParams& theta, const SufficientStats& stats,
                                  std::span<const double> scale) {
  std::vector<double> delta(stats.feature_count, 0.0);
  for (std::size_t gi = 0; gi < stats.groups.size(); ++gi) {
    const auto& g = stats.groups[gi];
    for (int a = 0; a < stats.cardinality; ++a) {
      const double coef = g.child_counts[a] - g.count * theta[gi][a];
      if (coef == 0.0) continue;
      for (int f : g.active[a]) delta[f] += coef * scale_of(scale, f);
    }
  }
  return delta;
}

namespace {

void check_dual_feasible(const DualParams& theta, const SufficientStats& stats) {
  if (theta.size() != stats.groups.size()) throw InputError("dual parameter group mismatch");
  for (const auto& tb : theta) {
    if (tb.size() != static_cast<std::size_t>(stats.cardinality))
      throw InputError("dual parameter length mismatch");
    double sum = 0.0;
    for (double v : tb) {
      if (!(v >= 0.0)) throw InputError("dual parameters must be nonnegative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InputError("dual parameters must sum to one");
  }
}

}  // namespace

double dual_objective(const DualParams& theta, const SufficientStats& stats, double beta,
                      std::span<const double> scale) {
  check_dual_feasible(theta, stats);
  double value = 0.0;
  for (std::size_t gi = 0; gi < stats.groups.size(); ++gi)
    value += stats.groups[gi].count * entropy(theta[gi]);
  const auto delta = dual_residual(theta, stats, scale);
  double sq = 0.0;
  for (double d : delta) sq += d * d;
  return value - sq / (2.0 * beta);
}

std::vector<double> recover_primal(const DualParams& theta, const SufficientStats& stats,
                                   double beta, std::span<const double> scale) {
  auto u = dual_residual(theta, stats, scale);
  for (double& v : u) v /= beta;
  return u;
}

DualParams empirical_conditionals(const SufficientStats& stats) {
  DualParams theta;
  for (const auto& g : stats.groups) {
    std::vector<double> tb(stats.cardinality);
    for (int a = 0; a < stats.cardinality; ++a) tb[a] = g.child_counts[a] / g.count;
    theta.push_back(std::move(tb));
  }
  return theta;
}

DualParams solve_dual(const SufficientStats& stats, double beta, const DualSolveOptions& options) {
  const int V = stats.cardinality;
  DualParams theta(stats.groups.size(), std::vector<double>(V, 1.0 / V));
  double value = dual_objective(theta, stats, beta);
  double step = 0.5;
  DualParams candidate = theta;
  std::vector<double> target(V);
  for (int it = 0; it < options.max_iterations; ++it) {
    // Fixed point of mirror ascent: theta_b = softmax(Phi_b u(theta)).
    const auto u = recover_primal(theta, stats, beta);
    const auto fixed = model_conditionals(u, stats);
    double residual = 0.0;
    for (std::size_t gi = 0; gi < theta.size(); ++gi)
      for (int a = 0; a < V; ++a)
        residual = std::max(residual, std::abs(fixed[gi][a] - theta[gi][a]));
    if (residual <= options.tolerance) return theta;

    while (true) {
      for (std::size_t gi = 0; gi < theta.size(); ++gi) {
        for (int a = 0; a < V; ++a)
          target[a] = (1.0 - step) * std::log(theta[gi][a]) + step * std::log(fixed[gi][a]);
        softmax_inplace(target);
        candidate[gi] = target;
      }
      const double next = dual_objective(candidate, stats, beta);
      if (next >= value - 1e-15 * std::max(1.0, std::abs(value)) || step < 1e-12) {
        theta.swap(candidate);
        value = next;
        step = std::min(1.0, step * 1.5);
        break;
      }
      step *= 0.5;
    }
  }
  return theta;
}

}  // namespace cvxbn
