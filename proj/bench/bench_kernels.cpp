// Serial reference vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.
//   ./bench_kernels --benchmark_filter=forest

#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>

#include "dcies/kernels.hpp"

using namespace dcies;
using namespace dcies::kernels;

namespace {

Matrix gaussian(Index n, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  return Matrix::NullaryExpr(n, d, [&] { return g(rng); });
}

// Complete tree of the given depth on random features and thresholds.
FlatTree random_tree(int depth, Index n_features, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> feat(0, static_cast<int>(n_features) - 1);
  std::normal_distribution<double> g;
  FlatTree t;
  const int nodes = (1 << (depth + 1)) - 1;
  for (int i = 0; i < nodes; ++i) {
    const bool leaf = i >= (1 << depth) - 1;
    t.feature.push_back(leaf ? -1 : feat(rng));
    t.threshold.push_back(leaf ? 0.0 : 0.5 * g(rng));
    t.left.push_back(leaf ? -1 : 2 * i + 1);
    t.right.push_back(leaf ? -1 : 2 * i + 2);
    t.value_offset.push_back(i);
    t.values.push_back(g(rng));
  }
  return t;
}

const Matrix& data() {
  static const Matrix X = gaussian(20000, 10, 1);
  return X;
}

void column_stats(benchmark::State& st, bool parallel) {
  const Matrix& X = data();
  for (auto _ : st) benchmark::DoNotOptimize(parallel ? column_stats_parallel(X) : column_stats_serial(X));
}

void rff(benchmark::State& st, bool parallel) {
  const Matrix& X = data();
  const Index D = st.range(0);
  const Matrix omega = gaussian(X.cols(), D, 2);
  const Vector offset = gaussian(D, 1, 3).col(0);
  for (auto _ : st)
    benchmark::DoNotOptimize(parallel ? rff_features_parallel(X, omega, offset, 0.1)
                                      : rff_features_serial(X, omega, offset, 0.1));
}

void median_distance(benchmark::State& st, bool parallel) {
  const Matrix X = data().topRows(st.range(0));
  for (auto _ : st)
    benchmark::DoNotOptimize(parallel ? median_pairwise_distance_parallel(X) : median_pairwise_distance_serial(X));
}

void forest(benchmark::State& st, bool parallel) {
  std::mt19937_64 rng(4);
  std::vector<FlatTree> trees;
  for (int i = 0; i < 100; ++i) trees.push_back(random_tree(static_cast<int>(st.range(0)), data().cols(), rng));
  for (auto _ : st)
    benchmark::DoNotOptimize(parallel ? forest_predict_parallel(trees, data()) : forest_predict_serial(trees, data()));
}

void masked(benchmark::State& st, bool parallel) {
  const Matrix& X = data();
  const int L = static_cast<int>(X.cols());
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<Index> row(0, X.rows() - 1);
  MaskedBatchPlan plan;
  plan.eval = &X;
  plan.background = &X;
  plan.draws = 32;
  std::vector<int> order(static_cast<std::size_t>(L));
  for (int i = 0; i < L; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int p = 0; p < 64; ++p) {
    plan.samples.push_back(row(rng));
    std::shuffle(order.begin(), order.end(), rng);
    plan.orders.push_back(order);
    for (int k = 0; k < plan.draws; ++k) plan.background_rows.push_back(row(rng));
  }
  for (auto _ : st) benchmark::DoNotOptimize(parallel ? masked_batch_parallel(plan) : masked_batch_serial(plan));
}

}  // namespace

BENCHMARK_CAPTURE(column_stats, serial, false);
BENCHMARK_CAPTURE(column_stats, parallel, true);
BENCHMARK_CAPTURE(rff, serial, false)->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(rff, parallel, true)->Arg(64)->Arg(512);
BENCHMARK_CAPTURE(median_distance, serial, false)->Arg(1000)->Arg(2000);
BENCHMARK_CAPTURE(median_distance, parallel, true)->Arg(1000)->Arg(2000);
BENCHMARK_CAPTURE(forest, serial, false)->Arg(4)->Arg(10);
BENCHMARK_CAPTURE(forest, parallel, true)->Arg(4)->Arg(10);
BENCHMARK_CAPTURE(masked, serial, false);
BENCHMARK_CAPTURE(masked, parallel, true);

BENCHMARK_MAIN();
