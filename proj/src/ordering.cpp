#include "cvxbn/ordering.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cvxbn/errors.hpp"
#include "cvxbn/featuregen.hpp"

namespace cvxbn {

Eigen::MatrixXd strict_upper_ones(std::size_t n) {
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(N, N);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = i + 1; j < N; ++j) T(i, j) = 1.0;
  return T;
}

Eigen::MatrixXd precedence_from_upper(const Eigen::MatrixXd& upper) {
  const auto n = static_cast<std::size_t>(upper.rows());
  return Eigen::MatrixXd::Identity(upper.rows(), upper.cols()) + upper +
         (strict_upper_ones(n) - upper).transpose();
}

Eigen::MatrixXi permutation_matrix(std::span<const int> order) {
  const auto n = static_cast<Eigen::Index>(order.size());
  std::vector<int> pos(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) pos[order[k]] = static_cast<int>(k);
  Eigen::MatrixXi S(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) S(i, j) = (i == j || pos[i] < pos[j]) ? 1 : 0;
  return S;
}

bool is_total_order(const Eigen::MatrixXi& S) {
  const Eigen::Index n = S.rows();
  if (S.cols() != n) return false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (S(i, i) != 1) return false;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (S(i, j) != 0 && S(i, j) != 1) return false;
      if (i != j && S(i, j) != 1 - S(j, i)) return false;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) {
        if (i == j || j == k || i == k) continue;
        if (S(i, j) + S(j, k) > S(i, k) + 1) return false;
      }
  return true;
}

namespace {

bool transitive(const Eigen::MatrixXi& R) {
  const Eigen::Index n = R.rows();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k)
        if (R(i, j) && R(j, k) && !R(i, k)) return false;
  return true;
}

}  // namespace

bool prop3_check(const Eigen::MatrixXi& upper) {
  const Eigen::Index n = upper.rows();
  Eigen::MatrixXi T = Eigen::MatrixXi::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) T(i, j) = 1;
  const Eigen::MatrixXi I = Eigen::MatrixXi::Identity(n, n);
  const Eigen::MatrixXi rest = T - upper;
  const Eigen::MatrixXi M = I + upper + upper.transpose();
  const Eigen::MatrixXi N = I + rest + rest.transpose();
  return transitive(M) && transitive(N);
}

OrderConstraintSystem build_constraints(std::span<const FeaturePattern> features, std::size_t n) {
  OrderConstraintSystem sys;
  sys.n = n;
  sys.feature_count = features.size();
  // Full assignment including the child's value identifies a shared pattern.
  std::map<std::vector<std::pair<int, int>>, std::vector<std::size_t>> shared;
  for (std::size_t f = 0; f < features.size(); ++f) {
    const auto& pat = features[f];
    std::vector<std::pair<int, int>> key;
    if (pat.child_value) key.emplace_back(pat.child, *pat.child_value);
    for (std::size_t k = 0; k < pat.parents.size(); ++k)
      key.emplace_back(pat.parents[k], pat.parent_values[k]);
    std::sort(key.begin(), key.end());
    shared[key].push_back(f);
    for (int p : pat.parents) sys.global_rows.push_back({f, p, pat.child});
  }
  for (auto& [key, members] : shared)
    if (members.size() > 1) sys.local_rows.push_back(members);
  return sys;
}

OrderingLayout::OrderingLayout(std::size_t n, std::size_t feature_count)
    : n_(n), f_(feature_count) {
  if (n < 2) throw InputError("ordering needs at least two variables");
  u_offset_ = f_;
  d_offset_ = u_offset_ + n * (n - 1) / 2;
  c_offset_ = d_offset_ + n * (n - 1);
}

std::size_t OrderingLayout::upper_index(int i, int j) const {
  // Row-major over the strict upper triangle.
  const auto ii = static_cast<std::size_t>(i);
  const auto jj = static_cast<std::size_t>(j);
  return u_offset_ + ii * n_ - ii * (ii + 1) / 2 + (jj - ii - 1);
}

Eigen::MatrixXd OrderingLayout::upper(std::span<const double> x) const {
  const auto N = static_cast<Eigen::Index>(n_);
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(N, N);
  for (int i = 0; i < static_cast<int>(n_); ++i)
    for (int j = i + 1; j < static_cast<int>(n_); ++j) U(i, j) = x[upper_index(i, j)];
  return U;
}

Eigen::MatrixXd OrderingLayout::simplex_rows(std::span<const double> x, std::size_t offset) const {
  const auto N = static_cast<Eigen::Index>(n_);
  Eigen::MatrixXd M(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    double sum = 0.0;
    for (Eigen::Index k = 0; k + 1 < N; ++k) {
      M(i, k) = x[offset + static_cast<std::size_t>(i) * (n_ - 1) + static_cast<std::size_t>(k)];
      sum += M(i, k);
    }
    M(i, N - 1) = 1.0 - sum;
  }
  return M;
}

std::vector<double> OrderingLayout::pack(std::span<const double> eta, const Eigen::MatrixXd& upper,
                                         const Eigen::MatrixXd& D,
                                         const Eigen::MatrixXd& C) const {
  std::vector<double> x(size());
  std::copy(eta.begin(), eta.end(), x.begin());
  for (int i = 0; i < static_cast<int>(n_); ++i)
    for (int j = i + 1; j < static_cast<int>(n_); ++j) x[upper_index(i, j)] = upper(i, j);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t k = 0; k + 1 < n_; ++k) {
      x[d_offset_ + i * (n_ - 1) + k] = D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      x[c_offset_ + i * (n_ - 1) + k] = C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
  return x;
}

namespace {

double precedence_entry(std::span<const double> x, const OrderingLayout& layout, int i, int j) {
  return i < j ? x[layout.upper_index(i, j)] : 1.0 - x[layout.upper_index(j, i)];
}

struct SlackMatrices {
  Eigen::MatrixXd m1, m2;  // I + U + U^T - D D^T,  E - U - U^T - C C^T
  Eigen::MatrixXd D, C;
};

SlackMatrices slack_matrices(std::span<const double> x, const OrderingLayout& layout) {
  const auto N = static_cast<Eigen::Index>(layout.n());
  const Eigen::MatrixXd U = layout.upper(x);
  SlackMatrices s;
  s.D = layout.d_matrix(x);
  s.C = layout.c_matrix(x);
  s.m1 = Eigen::MatrixXd::Identity(N, N) + U + U.transpose() - s.D * s.D.transpose();
  s.m2 = Eigen::MatrixXd::Ones(N, N) - U - U.transpose() - s.C * s.C.transpose();
  return s;
}

// Invokes fn(slack, terms) for every linear and box constraint, where the
// constraint reads sum(coef * x[idx]) <= rhs and slack = rhs - lhs.
template <typename Fn>
bool for_each_linear(std::span<const double> x, const OrderConstraintSystem& sys,
                     const OrderingLayout& layout, Fn&& fn) {
  using Term = std::pair<std::size_t, double>;
  std::vector<Term> terms;
  for (const auto& row : sys.local_rows) {
    terms.clear();
    double lhs = 0.0;
    for (std::size_t f : row) {
      terms.emplace_back(f, 1.0);
      lhs += x[f];
    }
    if (!fn(1.0 - lhs, terms)) return false;
  }
  for (const auto& row : sys.global_rows) {
    terms.clear();
    const double s = precedence_entry(x, layout, row.parent, row.child) - x[row.feature];
    terms.emplace_back(row.feature, 1.0);
    if (row.parent < row.child)
      terms.emplace_back(layout.upper_index(row.parent, row.child), -1.0);
    else
      terms.emplace_back(layout.upper_index(row.child, row.parent), 1.0);
    if (!fn(s, terms)) return false;
  }
  // Boxes on eta and U.
  for (std::size_t i = 0; i < layout.d_offset(); ++i) {
    terms.assign({{i, -1.0}});
    if (!fn(x[i], terms)) return false;
    terms.assign({{i, 1.0}});
    if (!fn(1.0 - x[i], terms)) return false;
  }
  // Nonnegativity of every D and C entry, including the eliminated column.
  const std::size_t n = layout.n();
  for (std::size_t base : {layout.d_offset(), layout.c_offset()}) {
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t k = 0; k + 1 < n; ++k) {
        const std::size_t idx = base + i * (n - 1) + k;
        sum += x[idx];
        terms.assign({{idx, -1.0}});
        if (!fn(x[idx], terms)) return false;
      }
      terms.clear();
      for (std::size_t k = 0; k + 1 < n; ++k) terms.emplace_back(base + i * (n - 1) + k, 1.0);
      if (!fn(1.0 - sum, terms)) return false;
    }
  }
  return true;
}

double min_eigenvalue(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

bool strictly_feasible(std::span<const double> x, const OrderConstraintSystem& system,
                       const OrderingLayout& layout, double eigen_guard) {
  if (x.size() != layout.size()) return false;
  const bool linear_ok = for_each_linear(
      x, system, layout, [](double slack, const auto&) { return slack > 0.0; });
  if (!linear_ok) return false;
  const auto s = slack_matrices(x, layout);
  return min_eigenvalue(s.m1) > eigen_guard && min_eigenvalue(s.m2) > eigen_guard;
}

BarrierEval barrier_objective(std::span<const double> x, double t,
                              const OrderConstraintSystem& system, const OrderingLayout& layout,
                              const MdlProblem& problem, const GEvalOptions& options) {
  if (!(t > 0.0)) throw InputError("barrier weight must be positive");
  if (!strictly_feasible(x, system, layout)) throw FeasibilityError("point is not strictly feasible");

  BarrierEval out;
  out.g = g_eta(problem, layout.eta(x), options);
  out.g_value = out.g.value;
  out.gradient.assign(layout.size(), 0.0);
  std::copy(out.g.gradient.begin(), out.g.gradient.end(), out.gradient.begin());

  const double inv_t = 1.0 / t;
  double log_sum = 0.0;
  for_each_linear(x, system, layout, [&](double slack, const auto& terms) {
    log_sum += std::log(slack);
    for (auto [idx, coef] : terms) out.gradient[idx] += inv_t * coef / slack;
    return true;
  });

  const auto s = slack_matrices(x, layout);
  const Eigen::LLT<Eigen::MatrixXd> l1(s.m1), l2(s.m2);
  const double logdet1 = 2.0 * l1.matrixLLT().diagonal().array().log().sum();
  const double logdet2 = 2.0 * l2.matrixLLT().diagonal().array().log().sum();
  const auto N = static_cast<Eigen::Index>(layout.n());
  const Eigen::MatrixXd inv1 = l1.solve(Eigen::MatrixXd::Identity(N, N));
  const Eigen::MatrixXd inv2 = l2.solve(Eigen::MatrixXd::Identity(N, N));

  // d log det(M) = tr(M^{-1} dM).
  for (int i = 0; i < static_cast<int>(N); ++i)
    for (int j = i + 1; j < static_cast<int>(N); ++j)
      out.gradient[layout.upper_index(i, j)] += -inv_t * 2.0 * inv1(i, j) + inv_t * 2.0 * inv2(i, j);
  const Eigen::MatrixXd gD = inv_t * 2.0 * inv1 * s.D;
  const Eigen::MatrixXd gC = inv_t * 2.0 * inv2 * s.C;
  const std::size_t n = layout.n();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const auto I = static_cast<Eigen::Index>(i), K = static_cast<Eigen::Index>(k);
      out.gradient[layout.d_offset() + i * (n - 1) + k] += gD(I, K) - gD(I, N - 1);
      out.gradient[layout.c_offset() + i * (n - 1) + k] += gC(I, K) - gC(I, N - 1);
    }

  out.value = out.g_value - inv_t * (log_sum + logdet1 + logdet2);
  return out;
}

std::vector<double> feasible_start(const OrderConstraintSystem& system,
                                   const OrderingLayout& layout) {
  const std::size_t n = layout.n();
  const auto N = static_cast<Eigen::Index>(n);
  std::vector<double> cap(layout.feature_count(), 1.0);
  for (const auto& row : system.local_rows)
    for (std::size_t f : row) cap[f] = std::min(cap[f], 1.0 / static_cast<double>(row.size()));
  // S = 1/2 off the diagonal at the start.
  for (const auto& row : system.global_rows) cap[row.feature] = std::min(cap[row.feature], 0.5);
  std::vector<double> eta(layout.feature_count());
  for (std::size_t f = 0; f < eta.size(); ++f) eta[f] = 0.5 * cap[f];
  const Eigen::MatrixXd U = 0.5 * strict_upper_ones(n);
  const Eigen::MatrixXd E = Eigen::MatrixXd::Constant(N, N, 1.0 / static_cast<double>(n));
  return layout.pack(eta, U, E, E);
}

OrderRelaxation solve_order_relaxation(MdlProblem problem, const OrderRelaxationOptions& options) {
  OrderRelaxation out;
  std::size_t n = problem.children.size();
  const auto features = problem.all_features();
  out.system = build_constraints(features, n);
  const OrderingLayout layout(n, problem.feature_count);
  std::vector<double> x = feasible_start(out.system, layout);
  if (!strictly_feasible(x, out.system, layout))
    throw SetupError("no strictly feasible starting point");

  std::vector<std::vector<double>> warm;
  for (double t : options.schedule) {
    ObjectiveFn fn = [&](std::span<const double> point) {
      GEvalOptions gopt;
      gopt.warm_start = warm;
      BarrierEval ev = barrier_objective(point, t, out.system, layout, problem, gopt);
      warm = ev.g.weights;
      return Objective{ev.value, std::move(ev.gradient)};
    };
    QuasiNewtonOptions qn;
    qn.feasible = [&](std::span<const double> point) {
      return strictly_feasible(point, out.system, layout);
    };
    qn.gradient_tolerance = options.gradient_tolerance;
    qn.max_iterations = options.max_iterations;
    try {
      x = minimize_quasi_newton(fn, x, qn).x;
    } catch (const StallError& stall) {
      // Best interior point of this stage; continue along the schedule.
      x = stall.best_iterate();
    }
    out.outer_g.push_back(g_eta(problem, layout.eta(x)).value);
  }

  out.x = x;
  out.eta.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(problem.feature_count));
  out.S = precedence_from_upper(layout.upper(x));
  out.at_solution = g_eta(problem, out.eta);
  out.g_value = out.at_solution.value;
  out.problem = std::move(problem);
  return out;
}

OrderRelaxation solve_order_relaxation(const Dataset& data, double beta,
                                       const OrderRelaxationOptions& options) {
  const auto candidates = candidate_sets(data.vars(), {});
  const auto features = generate_all_features(data, candidates);
  return solve_order_relaxation(build_problem(data, features, beta), options);
}

std::vector<int> order_from_soft(const Eigen::MatrixXd& S) {
  const auto n = static_cast<std::size_t>(S.rows());
  std::vector<double> sums(n);
  for (std::size_t i = 0; i < n; ++i) sums[i] = S.row(static_cast<Eigen::Index>(i)).sum();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return sums[a] > sums[b]; });
  return order;
}

OrderSolution round_order(const Dataset& data, const OrderRelaxation& relaxation,
                          RoundingRule rounding) {
  const MdlProblem& problem = relaxation.problem;
  const std::size_t n = problem.children.size();
  OrderSolution out;
  out.order = order_from_soft(relaxation.S);
  std::vector<int> position(n);
  for (std::size_t k = 0; k < n; ++k) position[out.order[k]] = static_cast<int>(k);

  const auto features = problem.all_features();
  std::vector<std::size_t> row_of(problem.feature_count, SIZE_MAX);
  for (std::size_t r = 0; r < relaxation.system.local_rows.size(); ++r)
    for (std::size_t f : relaxation.system.local_rows[r]) row_of[f] = r;

  ConsistencyChecker checker = [&](std::size_t f, std::span<const double> eta) {
    const auto& pat = features[f];
    for (int p : pat.parents)
      if (position[p] >= position[pat.child]) return false;
    if (row_of[f] != SIZE_MAX)
      for (std::size_t other : relaxation.system.local_rows[row_of[f]])
        if (other != f && eta[other] == 1.0) return false;
    return true;
  };

  const GEval soft = relaxation.at_solution.weights.empty() ? g_eta(problem, relaxation.eta)
                                                            : relaxation.at_solution;
  auto rounded = greedy_round(problem, relaxation.eta, soft, checker, {}, rounding);
  out.rounded_eta = rounded.eta;
  out.net = assemble_net(data, problem, rounded.eta, rounded.weights, out.order);
  extract_dag(out.net);
  return out;
}

LearnOrderResult learn_order(const Dataset& data, double beta,
                             const OrderRelaxationOptions& options, RoundingRule rounding) {
  LearnOrderResult res;
  res.relaxation = solve_order_relaxation(data, beta, options);
  res.solution = round_order(data, res.relaxation, rounding);
  return res;
}

}  // namespace cvxbn
