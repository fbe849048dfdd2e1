// Serial reference vs OpenMP kernels. Sizes are the per-variable count n;
// each kernel parallelizes over children.

#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "cvxbn/core_model.hpp"
#include "cvxbn/featuregen.hpp"
#include "cvxbn/harness.hpp"
#include "cvxbn/mdl_selection.hpp"

using namespace cvxbn;

namespace {

SyntheticNet net_for(std::size_t n) {
  SyntheticSpec s;
  s.n = n;
  s.edges = n;
  s.seed = 11;
  return generate_synthetic(s);
}

struct Fixture {
  Dataset data;
  std::vector<std::vector<int>> candidates;
  MdlProblem problem;
  std::vector<double> eta;
  BayesNet net;
  Dataset test;
};

const Fixture& fixture(std::size_t n) {
  static std::vector<std::unique_ptr<Fixture>> cache(64);
  auto& slot = cache[n];
  if (!slot) {
    slot = std::make_unique<Fixture>();
    const auto gen = net_for(n);
    slot->data = sample(gen.net, 200, 1);
    slot->candidates = candidate_sets(n, gen.order);
    const auto feats = generate_all_features(slot->data, slot->candidates);
    slot->problem = build_problem(slot->data, feats, 1.0);
    slot->eta.assign(slot->problem.feature_count, 0.5);
    slot->net = gen.net;
    slot->test = sample(gen.net, 100000, 2);
  }
  return *slot;
}

void BM_GEta(benchmark::State& st) {
  const auto& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(g_eta(f.problem, f.eta).value);
}
void BM_GEtaSerial(benchmark::State& st) {
  const auto& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(serial::g_eta(f.problem, f.eta).value);
}

void BM_Features(benchmark::State& st) {
  const auto& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(generate_all_features(f.data, f.candidates));
}
void BM_FeaturesSerial(benchmark::State& st) {
  const auto& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(serial::generate_all_features(f.data, f.candidates));
}

void BM_NegLogLik(benchmark::State& st) {
  const auto& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(neg_loglik(f.net, f.test));
}
void BM_NegLogLikSerial(benchmark::State& st) {
  const auto& f = fixture(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(serial::neg_loglik(f.net, f.test));
}

}  // namespace

BENCHMARK(BM_GEta)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GEtaSerial)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Features)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeaturesSerial)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NegLogLik)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NegLogLikSerial)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
