#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "cvxbn/errors.hpp"
#include "cvxbn/harness.hpp"
#include "oracles.hpp"

using namespace cvxbn;

namespace {

std::multiset<std::string> row_strings(const Dataset& d) {
  std::multiset<std::string> out;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    std::string s;
    for (std::size_t c = 0; c < d.vars(); ++c) s += d.domain(c).values[d.at(r, c)] + ",";
    out.insert(s);
  }
  return out;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("csv parsing") {
    const auto d = parse_csv("a, b\nx,1\ny,1\r\n\nx,2\n");
    CHECK(d.rows() == 3);
    CHECK(d.domain(0).name == "a");
    CHECK(d.domain(1).name == "b");
    CHECK(d.domain(0).values == std::vector<std::string>{"x", "y"});
    CHECK(d.domain(1).values == std::vector<std::string>{"1", "2"});
    CHECK(d.at(2, 1) == 1);
    CHECK(parse_csv(format_csv(d)).cells().size() == 6);
    CHECK(format_csv(parse_csv(format_csv(d))) == format_csv(d));
  }

  TEST_CASE("csv errors") {
    CHECK_THROWS_AS(parse_csv(""), InputError);
    CHECK_THROWS_AS(parse_csv("a,b\n"), InputError);
    CHECK_THROWS_AS(parse_csv("a,b\n1,2\n3\n"), InputError);
    CHECK_THROWS_AS(parse_csv("a,b\n1,\n"), InputError);
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), InputError);
  }

  TEST_CASE("conform maps by name and label") {
    const auto train = parse_csv("a,b\nx,1\ny,2\n");
    const auto test = parse_csv("b,a\n2,y\n1,y\n");
    const auto c = conform(test, train.domains());
    CHECK(c.at(0, 0) == 1);
    CHECK(c.at(0, 1) == 1);
    CHECK(c.at(1, 1) == 0);
    CHECK_THROWS_AS(conform(parse_csv("a,b\nz,1\n"), train.domains()), InputError);
    CHECK_THROWS_AS(conform(parse_csv("a\nx\n"), train.domains()), InputError);
  }

  TEST_CASE("split is deterministic, disjoint and exhaustive") {
    const auto d = parse_csv("i\n0\n1\n2\n3\n");
    const auto [tr, te] = split(d, std::size_t{2}, 5);
    CHECK(tr.rows() == 2);
    CHECK(te.rows() == 2);
    std::set<std::string> all;
    for (const auto* part : {&tr, &te})
      for (std::size_t r = 0; r < part->rows(); ++r) all.insert(part->domain(0).values[part->at(r, 0)]);
    CHECK(all.size() == 4);
    const auto [tr2, te2] = split(d, std::size_t{2}, 5);
    CHECK(format_csv(tr2) == format_csv(tr));
    bool differs = false;
    for (std::uint64_t s = 0; s < 20; ++s) differs |= format_csv(split(d, std::size_t{2}, s).first) != format_csv(tr);
    CHECK(differs);
    CHECK(split(d, 0.5, 1).first.rows() == 2);
    CHECK_THROWS_AS(split(d, std::size_t{5}, 1), InputError);
  }

  TEST_CASE("shuffled file rows keep per-column domains as sets") {
    const auto d = oracle::random_dataset(3, 30, 3, 3);
    auto text = format_csv(d);
    std::vector<std::string> lines;
    std::size_t start = text.find('\n') + 1;
    const std::string header = text.substr(0, start);
    while (start < text.size()) {
      const auto end = text.find('\n', start);
      lines.push_back(text.substr(start, end - start + 1));
      start = end + 1;
    }
    std::reverse(lines.begin(), lines.end());
    std::string shuffled = header;
    for (const auto& l : lines) shuffled += l;
    const auto e = parse_csv(shuffled);
    for (std::size_t c = 0; c < 3; ++c) {
      const std::set<std::string> a(d.domain(c).values.begin(), d.domain(c).values.end());
      const std::set<std::string> b(e.domain(c).values.begin(), e.domain(c).values.end());
      CHECK(a == b);
    }
    CHECK(row_strings(d) == row_strings(e));
  }

  TEST_CASE("synthetic networks") {
    for (std::size_t edges = 0; edges <= 10; ++edges) {
      SyntheticSpec s;
      s.edges = edges;
      s.seed = edges;
      const auto g = generate_synthetic(s);
      CHECK(extract_dag(g.net).size() == edges);
      CHECK(is_acyclic(g.parents));
    }
    SyntheticSpec bad;
    bad.edges = 11;
    CHECK_THROWS_AS(generate_synthetic(bad), InputError);
    SyntheticSpec s;
    s.seed = 42;
    CHECK(save_model(generate_synthetic(s).net) == save_model(generate_synthetic(s).net));
  }

  TEST_CASE("edge-pair inclusion is uniform") {
    const int N = 10000;
    std::vector<std::vector<int>> hits(5, std::vector<int>(5, 0));
    for (int seed = 0; seed < N; ++seed) {
      SyntheticSpec s;
      s.seed = static_cast<std::uint64_t>(seed);
      const auto g = generate_synthetic(s);
      for (std::size_t j = 0; j < 5; ++j)
        for (int p : g.parents[j]) ++hits[std::min<int>(p, j)][std::max<int>(p, j)];
    }
    const double p = 4.0 / 10.0, sigma = std::sqrt(p * (1 - p) / N);
    for (int a = 0; a < 5; ++a)
      for (int b = a + 1; b < 5; ++b) CHECK(std::abs(hits[a][b] / double(N) - p) <= 3 * sigma);
  }

  TEST_CASE("experiment determinism and the generator bound") {
    ExperimentSpec spec;
    spec.learners = {"k2-bic", "k2-bic", "convex", "hc-bde", "truth"};
    spec.train = 40;
    spec.test = 500;
    spec.repeats = 3;
    spec.beta_grid = {0.1, 1.0};
    SyntheticSpec s;
    s.seed = 3;
    spec.datasets.push_back({"synth", s, {}});
    const auto a = run_experiment(spec);
    const auto b = run_experiment(spec);
    CHECK(format_results(a) == format_results(b));
    const auto& row = a.cells[0];
    CHECK(row[0].losses == row[1].losses);
    CHECK(row[2].beta > 0.0);
    for (std::size_t l = 0; l < row.size(); ++l) {
      REQUIRE(row[l].losses.size() == 3);
      for (std::size_t r = 0; r < 3; ++r) CHECK(row[l].losses[r] >= row[4].losses[r] - 0.02);
    }
    const auto text = format_results(a);
    CHECK(text.find("±") != std::string::npos);
    CHECK(format_table(a).find("synth") != std::string::npos);
  }

  TEST_CASE("experiment on a real table and learner errors") {
    const auto d = oracle::random_dataset(3, 80, 5);
    ExperimentSpec spec;
    spec.learners = {"k2-bde", "truth"};
    spec.train = 50;
    spec.repeats = 2;
    spec.datasets.push_back({"table", std::nullopt, d});
    const auto res = run_experiment(spec);
    CHECK(res.cells[0][0].losses.size() == 2);
    // No generator: the truth learner fails on every repeat but the run goes on.
    CHECK(res.cells[0][1].failures == 2);
    CHECK(format_results(res).find("fail") != std::string::npos);
    spec.learners = {"nope"};
    CHECK_THROWS_AS(run_experiment(spec), InputError);
  }

  TEST_CASE("cell statistics") {
    CellResult c;
    c.losses = {1.0, 2.0, 3.0};
    CHECK(c.mean() == doctest::Approx(2.0));
    CHECK(c.sd() == doctest::Approx(1.0));
    c.losses = {1.0};
    CHECK(c.sd() == 0.0);
  }
}
