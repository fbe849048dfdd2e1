#pragma once

// Joint order and structure learning.
//
// A total order is encoded by a 0/1 precedence matrix S (S_ij = 1 iff i
// precedes j). S is never a free variable: it is derived from a strictly
// upper-triangular U as S = I + U + (Tu - U)^T, and transitivity is enforced
// through two equivalence-relation conditions on U which are relaxed to
//
//   I + U + U^T  >= D D^T,      E - U - U^T >= C C^T,      D e = e,  C e = e.
//
// The relaxed problem is solved with log and log-det barriers; the soft
// solution is rounded to a permutation and a hard feature selection.

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

#include "cvxbn/core_model.hpp"
#include "cvxbn/mdl_selection.hpp"
#include "cvxbn/optim.hpp"

namespace cvxbn {

/// Strictly upper-triangular all-ones matrix.
Eigen::MatrixXd strict_upper_ones(std::size_t n);

/// S = I + U + (Tu - U)^T.
Eigen::MatrixXd precedence_from_upper(const Eigen::MatrixXd& upper);

/// Comparison matrix of a permutation: S_ij = 1 iff i precedes j (diag 1).
Eigen::MatrixXi permutation_matrix(std::span<const int> order);

bool is_total_order(const Eigen::MatrixXi& S);

/// True iff I + U + U^T and I + (Tu - U) + (Tu - U)^T are both transitive.
bool prop3_check(const Eigen::MatrixXi& upper);

struct OrderConstraintSystem {
  std::size_t n = 0;
  std::size_t feature_count = 0;
  /// sum of eta over features sharing one full assignment pattern <= 1.
  std::vector<std::vector<std::size_t>> local_rows;
  struct GlobalRow {
    std::size_t feature;
    int parent;
    int child;
  };
  /// eta_feature <= S(parent, child).
  std::vector<GlobalRow> global_rows;
};

OrderConstraintSystem build_constraints(std::span<const FeaturePattern> features, std::size_t n);

/// Packed variable vector: [eta | U (i < j, row-major) | D free | C free].
/// D and C keep their first n - 1 columns; the last is 1 minus the row sum.
class OrderingLayout {
 public:
  OrderingLayout(std::size_t n, std::size_t feature_count);

  std::size_t size() const noexcept { return c_offset_ + n_ * (n_ - 1); }
  std::size_t n() const noexcept { return n_; }
  std::size_t feature_count() const noexcept { return f_; }
  std::size_t upper_index(int i, int j) const;  // requires i < j

  std::span<const double> eta(std::span<const double> x) const { return x.subspan(0, f_); }
  Eigen::MatrixXd upper(std::span<const double> x) const;
  Eigen::MatrixXd d_matrix(std::span<const double> x) const { return simplex_rows(x, d_offset_); }
  Eigen::MatrixXd c_matrix(std::span<const double> x) const { return simplex_rows(x, c_offset_); }

  std::vector<double> pack(std::span<const double> eta, const Eigen::MatrixXd& upper,
                           const Eigen::MatrixXd& D, const Eigen::MatrixXd& C) const;

  std::size_t u_offset() const noexcept { return u_offset_; }
  std::size_t d_offset() const noexcept { return d_offset_; }
  std::size_t c_offset() const noexcept { return c_offset_; }

 private:
  Eigen::MatrixXd simplex_rows(std::span<const double> x, std::size_t offset) const;

  std::size_t n_, f_, u_offset_, d_offset_, c_offset_;
};

struct BarrierEval {
  double value = 0.0;
  double g_value = 0.0;
  std::vector<double> gradient;
  GEval g;
};

/// Strict feasibility: positive linear and box slacks, both slack matrices
/// with smallest eigenvalue above `eigen_guard`.
bool strictly_feasible(std::span<const double> x, const OrderConstraintSystem& system,
                       const OrderingLayout& layout, double eigen_guard = 1e-10);

/// g(eta) - (1/t) [sum log slacks + log det(M1) + log det(M2)].
/// Throws FeasibilityError at a point that is not strictly feasible.
BarrierEval barrier_objective(std::span<const double> x, double t,
                              const OrderConstraintSystem& system, const OrderingLayout& layout,
                              const MdlProblem& problem, const GEvalOptions& options = {});

/// The default strictly feasible start: U = Tu/2, D = C = E/n, and eta at
/// half of its tightest cap.
std::vector<double> feasible_start(const OrderConstraintSystem& system,
                                   const OrderingLayout& layout);

struct OrderRelaxationOptions {
  std::vector<double> schedule{1.0, 10.0, 100.0, 1000.0};
  double gradient_tolerance = 1e-5;
  int max_iterations = 500;
};

struct OrderRelaxation {
  MdlProblem problem;
  OrderConstraintSystem system;
  std::vector<double> x;      // final interior point
  std::vector<double> eta;
  Eigen::MatrixXd S;
  double g_value = 0.0;       // barrier-free objective at the final point
  std::vector<double> outer_g;  // g after each barrier stage
  GEval at_solution;
};

/// Builds the order-free problem and runs the barrier schedule.
OrderRelaxation solve_order_relaxation(const Dataset& data, double beta,
                                       const OrderRelaxationOptions& options = {});

/// Runs the barrier schedule on a prepared problem.
OrderRelaxation solve_order_relaxation(MdlProblem problem,
                                       const OrderRelaxationOptions& options = {});

/// Descending row sums of S, ties by index.
std::vector<int> order_from_soft(const Eigen::MatrixXd& S);

struct OrderSolution {
  std::vector<int> order;
  std::vector<double> rounded_eta;
  BayesNet net;
};

OrderSolution round_order(const Dataset& data, const OrderRelaxation& relaxation,
                          RoundingRule rounding = RoundingRule::FixedWeights);

struct LearnOrderResult {
  OrderRelaxation relaxation;
  OrderSolution solution;
};

LearnOrderResult learn_order(const Dataset& data, double beta,
                             const OrderRelaxationOptions& options = {},
                             RoundingRule rounding = RoundingRule::FixedWeights);

}  // namespace cvxbn
