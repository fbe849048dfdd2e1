#include <doctest.h>

#include <cmath>
#include <limits>

#include "cvxbn/errors.hpp"
#include "cvxbn/featuregen.hpp"
#include "cvxbn/mdl_selection.hpp"
#include "oracles.hpp"

using namespace cvxbn;

namespace {

FeaturePattern pat(int child, std::optional<int> a, std::vector<int> ps = {},
                   std::vector<int> vs = {}) {
  return FeaturePattern{child, a, std::move(ps), std::move(vs)};
}

MdlProblem random_problem(std::uint64_t seed, std::size_t n = 3, std::size_t T = 25,
                          double beta = 1.0) {
  const auto d = oracle::random_dataset(n, T, seed);
  const auto feats = generate_all_features(d, candidate_sets(n, {}));
  return build_problem(d, feats, beta);
}

RegularizationConfig tight() {
  RegularizationConfig c;
  c.tolerance = 1e-11;
  c.max_iterations = 200;
  return c;
}

double g_value(const MdlProblem& p, std::span<const double> eta) {
  GEvalOptions o;
  o.newton = tight();
  return g_eta(p, eta, o).value;
}

std::vector<double> random_eta(std::size_t F, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<double> e(F);
  for (auto& x : e) x = lo + (hi - lo) * uniform01(rng);
  return e;
}

// x2 copies x1 with 5% flips; x1 fair.
Dataset noisy_copy(std::size_t T, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<int>> rows;
  for (std::size_t r = 0; r < T; ++r) {
    const int a = uniform01(rng) < 0.5;
    const int b = uniform01(rng) < 0.05 ? 1 - a : a;
    rows.push_back({a, b});
  }
  return oracle::from_rows(rows);
}

// Feature 0: x1 = 1 marginal (worthless); feature 1: x2 = 1 given x1 = 1 (informative).
MdlProblem two_feature_problem() {
  const auto d = noisy_copy(200, 11);
  std::vector<std::vector<FeaturePattern>> feats{{pat(0, 1)}, {pat(1, 1, {0}, {1})}};
  return build_problem(d, feats, 1.0);
}

}  // namespace

TEST_SUITE("mdl_selection") {
  TEST_CASE("description cost examples") {
    const auto doms = oracle::binary_domains(5);
    CHECK(feature_cost(pat(0, 1), doms, 5) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(feature_cost(pat(0, 1, {1}, {0}), doms, 5) ==
          doctest::Approx(std::log(5.0) + 2 * std::log(2.0)).epsilon(1e-14));
    CHECK(feature_cost(pat(0, 1, {1, 2}, {0, 1}), doms, 5) > feature_cost(pat(0, 1, {1}, {0}), doms, 5));
    const auto dc = description_costs(std::vector<FeaturePattern>{pat(0, 1)}, doms, 5, 100);
    CHECK(dc.per_weight == doctest::Approx(0.5 * std::log(100.0)));
  }

  TEST_CASE("g at eta = 0 is the max-entropy value") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto d = oracle::random_dataset(3, 20, seed, 3);
      const auto feats = generate_all_features(d, candidate_sets(3, {}));
      const auto p = build_problem(d, feats, 0.5);
      std::vector<double> zero(p.feature_count, 0.0);
      const auto ev = g_eta(p, zero);
      CHECK(ev.value == doctest::Approx(3 * 20 * std::log(3.0)).epsilon(1e-10));
      for (const auto& th : ev.theta)
        for (const auto& row : th)
          for (double v : row) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
  }

  TEST_CASE("gradient matches central differences") {
    Rng rng(3);
    for (int k = 0; k < 20; ++k) {
      const auto p = random_problem(100 + k, 3, 12 + k % 10, k % 2 ? 0.3 : 2.0);
      const auto eta = random_eta(p.feature_count, rng, 0.05, 0.95);
      GEvalOptions o;
      o.newton = tight();
      const auto ev = g_eta(p, eta, o);
      const auto fd = oracle::finite_gradient(
          [&](std::span<const double> x) { return g_value(p, x); }, eta, 1e-5);
      for (std::size_t f = 0; f < fd.size(); ++f)
        CHECK(std::abs(ev.gradient[f] - fd[f]) <= 1e-4 * std::max(1.0, std::abs(fd[f])));
    }
  }

  TEST_CASE("g is convex along random segments") {
    Rng rng(5);
    const auto p = random_problem(9, 3, 20);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const auto a = random_eta(p.feature_count, rng);
      const auto b = random_eta(p.feature_count, rng);
      const double lam = uniform01(rng);
      std::vector<double> m(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) m[i] = lam * a[i] + (1 - lam) * b[i];
      worst = std::max(worst, g_value(p, m) - lam * g_value(p, a) - (1 - lam) * g_value(p, b));
    }
    CHECK(worst <= 1e-9);
  }

  TEST_CASE("integral g equals the hard description length") {
    Rng rng(8);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto p = random_problem(seed, 3, 15);
      std::vector<double> e(p.feature_count);
      for (auto& x : e) x = uniform01(rng) < 0.5 ? 1.0 : 0.0;
      CHECK(std::abs(g_value(p, e) - mdl_objective(p, e, tight())) <= 1e-6);
    }
  }

  TEST_CASE("serial and parallel g agree") {
    const auto p = random_problem(21, 4, 30);
    Rng rng(2);
    const auto eta = random_eta(p.feature_count, rng);
    const auto a = g_eta(p, eta), b = serial::g_eta(p, eta);
    CHECK(a.value == b.value);
    CHECK(a.gradient == b.gradient);
  }

  TEST_CASE("two-feature instance against a grid oracle") {
    const auto p = two_feature_problem();
    REQUIRE(p.feature_count == 2);
    double best = std::numeric_limits<double>::infinity();
    double b0 = 0, b1 = 0;
    for (int i = 0; i <= 100; ++i)
      for (int j = 0; j <= 100; ++j) {
        const std::vector<double> e{i / 100.0, j / 100.0};
        const double v = g_value(p, e);
        if (v < best) best = v, b0 = e[0], b1 = e[1];
      }
    CHECK(b0 < 0.1);
    CHECK(b1 > 0.5);
    const auto res = minimize_g(p, {0.5, 0.5});
    CHECK(res.converged);
    CHECK(res.value <= best + 1e-8);
    CHECK(res.eta[0] < 0.1);
    CHECK(res.eta[1] > 0.5);
    for (std::size_t k = 1; k < res.trace.size(); ++k)
      CHECK(res.trace[k].value <= res.trace[k - 1].value + 1e-12);
  }

  TEST_CASE("minimize_g is start-independent") {
    const auto p = random_problem(31, 3, 30, 0.5);
    Rng rng(6);
    const auto ref = minimize_g(p, std::vector<double>(p.feature_count, 0.5));
    CHECK(ref.value <= g_value(p, std::vector<double>(p.feature_count, 0.0)) + 1e-9);
    CHECK(ref.value <= g_value(p, std::vector<double>(p.feature_count, 1.0)) + 1e-9);
    for (int k = 0; k < 10; ++k) {
      const auto r = minimize_g(p, random_eta(p.feature_count, rng));
      CHECK(std::abs(r.value - ref.value) <= 1e-4);
    }
  }

  TEST_CASE("greedy rounding examples") {
    const auto p = two_feature_problem();
    for (auto rule : {RoundingRule::FixedWeights, RoundingRule::Reoptimized}) {
      const std::vector<double> hard{1.0, 0.0};
      auto r0 = greedy_round(p, hard, g_eta(p, hard), {}, {}, rule);
      CHECK(r0.eta == hard);
      const std::vector<double> soft{0.2, 0.9};
      auto r = greedy_round(p, soft, g_eta(p, soft), {}, {}, rule);
      CHECK(r.eta == std::vector<double>{0.0, 1.0});
      // Direct hard evaluation agrees with the choice.
      CHECK(mdl_objective(p, r.eta) < mdl_objective(p, std::vector<double>{1.0, 1.0}));
      // A checker that vetoes everything forces zeros.
      auto rz = greedy_round(p, soft, g_eta(p, soft), [](std::size_t, std::span<const double>) { return false; },
                             {}, rule);
      CHECK(rz.eta == std::vector<double>{0.0, 0.0});
    }
  }

  TEST_CASE("rounded description length never exceeds the empty structure") {
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
      const auto p = random_problem(500 + seed, 4, 30, 0.3);
      const auto res = minimize_g(p, std::vector<double>(p.feature_count, 0.5));
      for (auto rule : {RoundingRule::FixedWeights, RoundingRule::Reoptimized}) {
        const auto r = greedy_round(p, res.eta, res.at_solution, {}, {}, rule);
        for (double v : r.eta) CHECK((v == 0.0 || v == 1.0));
        const std::vector<double> zero(p.feature_count, 0.0);
        CHECK(mdl_objective(p, r.eta) <= mdl_objective(p, zero) + 1e-9);
      }
    }
  }

  TEST_CASE("independent variables learn the empty graph") {
    const auto d = oracle::random_dataset(2, 200, 77);
    const auto sol = learn_fixed_order(d, std::vector<int>{0, 1}, 1.0);
    CHECK(extract_dag(sol.net).empty());
    // Row order does not matter.
    std::vector<std::size_t> rev(200);
    for (std::size_t i = 0; i < 200; ++i) rev[i] = 199 - i;
    const auto sol2 = learn_fixed_order(d.subset(rev), std::vector<int>{0, 1}, 1.0);
    CHECK(sol2.rounded_eta == sol.rounded_eta);
    CHECK(sol2.soft_value == doctest::Approx(sol.soft_value).epsilon(1e-9));
  }

  TEST_CASE("deterministic copy learns the edge") {
    Rng rng(12);
    std::vector<std::vector<int>> rows;
    for (int r = 0; r < 200; ++r) {
      const int a = uniform01(rng) < 0.5;
      rows.push_back({a, a});
    }
    const auto d = oracle::from_rows(rows);
    for (auto rule : {RoundingRule::FixedWeights, RoundingRule::Reoptimized}) {
      const auto sol = learn_fixed_order(d, std::vector<int>{0, 1}, 0.1, {}, rule);
      const auto edges = extract_dag(sol.net);
      REQUIRE(edges.size() == 1);
      CHECK(edges[0] == Edge{0, 1});
      std::vector<std::vector<int>> test_rows{{0, 0}, {1, 1}};
      // Fair x1 and exact copy: ln 2 per row is the floor.
      CHECK(neg_loglik(sol.net, oracle::from_rows(test_rows)) <= std::log(2.0) + 0.1);
    }
  }
}
