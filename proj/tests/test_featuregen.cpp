#include <doctest.h>

#include <cmath>
#include <map>

#include "cvxbn/errors.hpp"
#include "cvxbn/estimation.hpp"
#include "cvxbn/featuregen.hpp"
#include "oracles.hpp"

using namespace cvxbn;

namespace {

// Empirical conditional entropy in total nats: the saturated-table fit as
// beta goes to 0.
double saturated_loss(const Dataset& data, int child, const std::vector<int>& parents) {
  std::map<std::vector<int>, std::vector<double>> counts;
  const int V = data.domain(child).cardinality();
  for (std::size_t r = 0; r < data.rows(); ++r) {
    std::vector<int> key;
    for (int p : parents) key.push_back(data.at(r, p));
    auto& c = counts[key];
    if (c.empty()) c.assign(V, 0.0);
    c[data.at(r, child)] += 1.0;
  }
  double loss = 0.0;
  for (const auto& [key, c] : counts) {
    double nb = 0.0;
    for (double v : c) nb += v;
    for (double v : c)
      if (v > 0) loss -= v * std::log(v / nb);
  }
  return loss;
}

double fitted_data_loss(const Dataset& data, int child, const std::vector<FeaturePattern>& feats,
                        double beta) {
  const auto stats = collect_stats(data, child, feats);
  RegularizationConfig cfg;
  cfg.beta = beta;
  cfg.max_iterations = 400;
  const auto w = newton_solve(stats, cfg);
  return data_loss(w, stats);
}

std::vector<int> others(std::size_t n, int child) {
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i)
    if (static_cast<int>(i) != child) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace

TEST_SUITE("featuregen") {
  TEST_CASE("augment shape and replica contents") {
    const auto d2 = oracle::random_dataset(2, 2, 1);
    CHECK(augment(d2, 1, std::vector<int>{0}).rows() == 4);
    const auto d3 = oracle::random_dataset(3, 3, 2, 3);
    const auto aug = augment(d3, 0, std::vector<int>{1, 2});
    CHECK(aug.rows() == 9);
    for (std::size_t r = 0; r < 3; ++r)
      for (int a = 0; a < 3; ++a) {
        const auto row = aug.row(r * 3 + a);
        CHECK(row[0] == a);
        CHECK(row[1] == d3.at(r, 1));
        CHECK(row[2] == d3.at(r, 2));
      }
  }

  TEST_CASE("rank_add basics") {
    SpanTracker t(4);
    const std::vector<double> e1{1, 0, 0, 0}, e2{0, 1, 0, 0};
    CHECK(rank_add(t, e1).accepted);
    CHECK(rank_add(t, e2).rank == 2);
    CHECK_FALSE(rank_add(t, e1).accepted);
    const std::vector<double> sum{1, 1, 0, 0};
    CHECK_FALSE(rank_add(t, sum).accepted);
  }

  TEST_CASE("rank of random 0/1 streams matches exact elimination") {
    Rng rng(4);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t dim = 6 + trial % 10;
      SpanTracker t(dim);
      std::vector<std::vector<long long>> rows;
      for (int k = 0; k < 25; ++k) {
        std::vector<double> v(dim);
        std::vector<long long> iv(dim);
        // Sparse-ish vectors create plenty of dependencies.
        for (std::size_t i = 0; i < dim; ++i) {
          iv[i] = uniform01(rng) < 0.3 ? 1 : 0;
          v[i] = static_cast<double>(iv[i]);
        }
        t.add(v);
        rows.push_back(iv);
        CHECK(t.rank() == oracle::exact_rank(rows));
      }
    }
  }

  TEST_CASE("full 2-variable data: generated features fit any CPT") {
    const auto d = oracle::from_rows({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    const auto feats = generate_features(d, 1, std::vector<int>{0});
    CHECK(std::abs(fitted_data_loss(d, 1, feats, 1e-6) - saturated_loss(d, 1, {0})) <= 1e-4);
  }

  TEST_CASE("T = 1 caps the rank at V") {
    const auto d = oracle::random_dataset(3, 1, 5);
    const auto res = generate_features_detailed(d, 2, std::vector<int>{0, 1});
    CHECK(res.rank <= 2);
    CHECK(res.features.size() <= 2);
  }

  TEST_CASE("generated set matches exhaustive set on n = 4, T = 6") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto d = oracle::random_dataset(4, 6, 40 + seed);
      for (int child = 0; child < 4; ++child) {
        const auto cands = others(4, child);
        const auto gen = generate_features(d, child, cands);
        const auto all = exhaustive_patterns(d.domains(), child, cands);
        const double a = fitted_data_loss(d, child, gen, 1e-6) / 6.0;
        CHECK(std::abs(a - saturated_loss(d, child, cands) / 6.0) <= 1e-4);
        // Maximum likelihood: regularization small enough that its drag is negligible.
        const double ml_gen = fitted_data_loss(d, child, gen, 1e-11) / 6.0;
        const double ml_all = fitted_data_loss(d, child, all, 1e-11) / 6.0;
        CHECK(std::abs(ml_gen - ml_all) <= 1e-6);
        CHECK(verify_span(gen, all, augment(d, child, cands)));
      }
    }
  }

  TEST_CASE("verify_span basics") {
    const auto d = oracle::random_dataset(2, 5, 7);
    const auto aug = augment(d, 1, std::vector<int>{0});
    const auto all = exhaustive_patterns(d.domains(), 1, std::vector<int>{0});
    CHECK(verify_span(all, all, aug));
    // Both child-value indicators sum to the constant.
    FeaturePattern a0{1, 0, {}, {}}, a1{1, 1, {}, {}};
    CHECK(verify_span(std::vector<FeaturePattern>{}, std::vector<FeaturePattern>{}, aug));
    CHECK(verify_span(std::vector<FeaturePattern>{a0}, std::vector<FeaturePattern>{a1}, aug));
    FeaturePattern cross{1, 1, {0}, {1}};
    CHECK_FALSE(verify_span(std::vector<FeaturePattern>{}, std::vector<FeaturePattern>{a1}, aug));
    if (d.domain(0).cardinality() == 2) {
      bool mixed = false;
      for (std::size_t r = 1; r < d.rows(); ++r) mixed |= d.at(r, 0) != d.at(0, 0);
      if (mixed) CHECK_FALSE(verify_span(std::vector<FeaturePattern>{a1}, std::vector<FeaturePattern>{cross}, aug));
    }
  }

  TEST_CASE("rank bound, pruned patterns, and child-free dropping") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto d = oracle::random_dataset(4, 3 + seed % 6, 300 + seed);
      const int child = static_cast<int>(seed % 4);
      const auto cands = others(4, child);
      const auto res = generate_features_detailed(d, child, cands);
      const auto aug = augment(d, child, cands);
      CHECK(res.rank <= aug.rows());
      CHECK(res.levels <= aug.rows() + 1);
      SpanTracker t(aug.rows());
      for (const auto& f : res.kept) t.add(aug.response(f));
      CHECK(t.rank() == res.rank);
      for (const auto& f : res.pruned) CHECK(t.contains(aug.response(f)));
      for (const auto& f : res.features) CHECK(f.child_value.has_value());
      // Fitting with and without the child-free patterns gives the same loss.
      std::vector<FeaturePattern> child_free;
      for (const auto& f : res.kept)
        if (!f.child_value && !f.parents.empty()) child_free.push_back(f);
      auto with = res.features;
      with.insert(with.end(), child_free.begin(), child_free.end());
      const double a = fitted_data_loss(d, child, res.features, 1e-2);
      const auto stats = collect_stats(d, child, with);
      RegularizationConfig cfg;
      cfg.beta = 1e-2;
      cfg.max_iterations = 400;
      // Child-free weights only shift per-configuration scores; their optimum is 0.
      const auto w = newton_solve(stats, cfg);
      CHECK(std::abs(data_loss(w, stats) - a) <= 1e-8);
    }
  }

  TEST_CASE("cap raises a capacity error") {
    const auto d = oracle::random_dataset(4, 8, 9);
    FeatureGenOptions opt;
    opt.cap = 2;
    CHECK_THROWS_AS(generate_features(d, 0, std::vector<int>{1, 2, 3}, opt), CapacityError);
  }

  TEST_CASE("parallel and serial generation agree") {
    const auto d = oracle::random_dataset(5, 20, 10);
    const auto cands = candidate_sets(5, {});
    CHECK(generate_all_features(d, cands) == serial::generate_all_features(d, cands));
    const std::vector<int> order{3, 1, 4, 0, 2};
    const auto c2 = candidate_sets(5, order);
    CHECK(c2[3].empty());
    CHECK(c2[2] == std::vector<int>{0, 1, 3, 4});
  }
}
