#include <benchmark/benchmark.h>

#include <algorithm>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ttpmap/classifier.hpp"
#include "ttpmap/features.hpp"
#include "ttpmap/postprocess.hpp"

using namespace ttpmap;

namespace {

// Letters-only token so it survives cleaning.
std::string token(std::size_t n) {
  std::string s = "w";
  do {
    s += static_cast<char>('a' + n % 26);
    n /= 26;
  } while (n);
  return s;
}

std::vector<std::vector<std::string>> corpus(std::size_t docs, std::size_t vocab, std::size_t len) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> pick(0, vocab - 1);
  std::vector<std::vector<std::string>> out(docs);
  for (auto& d : out) {
    for (std::size_t i = 0; i < len; ++i) d.push_back(token(pick(rng)));
  }
  return out;
}

}  // namespace

static void BM_VectorizerFit(benchmark::State& state) {
  const auto c = corpus(static_cast<std::size_t>(state.range(0)), 5000, 300);
  for (auto _ : state) benchmark::DoNotOptimize(VectorizerModel::fit(c));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_VectorizerFit)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_VectorizerTransform(benchmark::State& state) {
  const auto c = corpus(500, 5000, 300);
  const auto model = VectorizerModel::fit(c);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(model.transform(c[i++ % c.size()]));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_VectorizerTransform);

static void BM_TrainLabel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = corpus(n, 5000, 300);
  const auto model = VectorizerModel::fit(c);
  std::vector<FeatureVector> x;
  for (const auto& d : c) x.push_back(model.transform(d));
  // Positive when the document mentions one particular token.
  const auto y = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = std::find(c[i].begin(), c[i].end(), token(3)) != c[i].end();
  const std::span<const bool> targets(y.get(), n);
  for (auto _ : state) benchmark::DoNotOptimize(train_label("L", x, targets, model.dimension()));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainLabel)->Arg(200)->Arg(1500)->Unit(benchmark::kMillisecond);

static void BM_MaximumBranching(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> w(0.01, 1.0);
  std::vector<WeightedEdge> edges;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a != b && rng() % 4 == 0) edges.push_back({a, b, w(rng)});
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(maximum_branching(n, edges));
  state.counters["edges"] = static_cast<double>(edges.size());
}
BENCHMARK(BM_MaximumBranching)->Arg(50)->Arg(200)->Arg(600)->Unit(benchmark::kMicrosecond);

static void BM_SolveKnapsack(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> v(-0.2, 1.0);
  std::vector<double> values(n);
  for (auto& x : values) x = v(rng);
  const std::vector<std::size_t> weights(n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(solve_knapsack(values, weights, 15));
}
BENCHMARK(BM_SolveKnapsack)->Arg(12)->Arg(200)->Arg(600);

BENCHMARK_MAIN();
