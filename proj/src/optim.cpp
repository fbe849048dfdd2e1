#include "cvxbn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "cvxbn/errors.hpp"

namespace cvxbn {

namespace {

struct Bounds {
  const std::vector<double>& lower;
  const std::vector<double>& upper;

  double lo(std::size_t i) const {
    return lower.empty() ? -std::numeric_limits<double>::infinity() : lower[i];
  }
  double hi(std::size_t i) const {
    return upper.empty() ? std::numeric_limits<double>::infinity() : upper[i];
  }
  void project(std::vector<double>& x) const {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo(i), hi(i));
  }
  double projected_gradient_norm(std::span<const double> x, std::span<const double> g) const {
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = std::clamp(x[i] - g[i], lo(i), hi(i));
      m = std::max(m, std::abs(p - x[i]));
    }
    return m;
  }
  bool is_free(std::size_t i, double x, double g) const {
    if (x <= lo(i) && g > 0.0) return false;
    if (x >= hi(i) && g < 0.0) return false;
    return true;
  }
};

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

struct Pair {
  std::vector<double> s, y;
  double rho;
};

}  // namespace

QuasiNewtonResult minimize_quasi_newton(const ObjectiveFn& fn, std::vector<double> x0,
                                        const QuasiNewtonOptions& options) {
  const std::size_t n = x0.size();
  Bounds bounds{options.lower, options.upper};
  bounds.project(x0);
  if (options.feasible && !options.feasible(x0))
    throw FeasibilityError("initial point is not strictly feasible");

  QuasiNewtonResult res;
  res.x = std::move(x0);
  Objective cur = fn(res.x);
  std::deque<Pair> memory;
  std::vector<double> d(n), q(n), trial(n), alpha_hist;

  for (int it = 0;; ++it) {
    res.iterations = it;
    res.value = cur.value;
    res.projected_gradient_norm = bounds.projected_gradient_norm(res.x, cur.gradient);
    if (options.on_iteration) options.on_iteration(it, cur.value, res.projected_gradient_norm);
    if (res.projected_gradient_norm <= options.gradient_tolerance) {
      res.converged = true;
      return res;
    }
    if (it >= options.max_iterations) return res;

    bool steepest = false;
    auto build_direction = [&](bool use_memory) {
      for (std::size_t i = 0; i < n; ++i)
        q[i] = bounds.is_free(i, res.x[i], cur.gradient[i]) ? cur.gradient[i] : 0.0;
      if (!use_memory || memory.empty()) {
        const double qn = std::sqrt(dot(q, q));
        const double scale = memory.empty() ? 1.0 / std::max(1.0, qn) : 1.0;
        for (std::size_t i = 0; i < n; ++i) d[i] = -scale * q[i];
        return;
      }
      std::vector<double> r = q;
      alpha_hist.assign(memory.size(), 0.0);
      for (std::size_t k = memory.size(); k-- > 0;) {
        alpha_hist[k] = memory[k].rho * dot(memory[k].s, r);
        for (std::size_t i = 0; i < n; ++i) r[i] -= alpha_hist[k] * memory[k].y[i];
      }
      const auto& last = memory.back();
      const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
      for (double& v : r) v *= gamma;
      for (std::size_t k = 0; k < memory.size(); ++k) {
        const double beta = memory[k].rho * dot(memory[k].y, r);
        for (std::size_t i = 0; i < n; ++i) r[i] += (alpha_hist[k] - beta) * memory[k].s[i];
      }
      for (std::size_t i = 0; i < n; ++i)
        d[i] = bounds.is_free(i, res.x[i], cur.gradient[i]) ? -r[i] : 0.0;
    };

    build_direction(true);
    if (!(dot(d, cur.gradient) < 0.0)) {
      memory.clear();
      build_direction(false);
      steepest = true;
    }

    bool accepted = false;
    Objective next;
    while (!accepted) {
      double step = 1.0;
      int backtracks = 0;
      int infeasible = 0;
      while (backtracks <= options.max_backtracks) {
        for (std::size_t i = 0; i < n; ++i) trial[i] = res.x[i] + step * d[i];
        bounds.project(trial);
        if (options.feasible && !options.feasible(trial)) {
          step *= 0.5;
          if (++infeasible > 100) break;
          continue;
        }
        double decrease = 0.0;
        for (std::size_t i = 0; i < n; ++i) decrease += cur.gradient[i] * (trial[i] - res.x[i]);
        if (decrease >= 0.0 && trial == res.x) break;
        next = fn(trial);
        if (std::isfinite(next.value) && next.value <= cur.value + options.armijo * decrease) {
          accepted = true;
          break;
        }
        step *= 0.5;
        ++backtracks;
      }
      if (accepted) break;
      if (steepest) throw StallError("line search failed to decrease the objective", res.x, cur.value);
      memory.clear();
      build_direction(false);
      steepest = true;
    }

    Pair p;
    p.s.resize(n);
    p.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = trial[i] - res.x[i];
      p.y[i] = next.gradient[i] - cur.gradient[i];
    }
    const double sy = dot(p.s, p.y);
    if (sy > 1e-12 * std::sqrt(dot(p.s, p.s) * dot(p.y, p.y))) {
      p.rho = 1.0 / sy;
      memory.push_back(std::move(p));
      if (static_cast<int>(memory.size()) > options.memory) memory.pop_front();
    }
    res.x = trial;
    cur = std::move(next);
  }
}

}  // namespace cvxbn
