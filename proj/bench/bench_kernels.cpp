// Serial reference vs OpenMP kernels over vocabulary-sized matrices.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "advtext/kernels.hpp"

using namespace advtext::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

constexpr std::size_t kDim = 300;

Backend backend_of(const benchmark::State& state) { return state.range(1) ? Backend::kParallel : Backend::kSerial; }

void label(benchmark::State& state) { state.SetLabel(state.range(1) ? "parallel" : "serial"); }

void BM_NearestRow(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto matrix = random_values(rows * kDim, 1);
  const auto query = random_values(kDim, 2);
  const MatrixView view{matrix, rows, kDim};
  for (auto _ : state) benchmark::DoNotOptimize(nearest_row(backend_of(state), view, query, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
  label(state);
}

void BM_RowDots(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto matrix = random_values(rows * kDim, 3);
  const auto query = random_values(kDim, 4);
  std::vector<double> out(rows);
  const MatrixView view{matrix, rows, kDim};
  for (auto _ : state) {
    row_dots(backend_of(state), view, query, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
  label(state);
}

// A sentence of 40 gradient rows against the whole vocabulary, as in flip scoring.
void BM_GemmNt(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t len = 40;
  const auto a = random_values(len * kDim, 5);
  const auto b = random_values(rows * kDim, 6);
  std::vector<double> out(len * rows);
  for (auto _ : state) {
    gemm_nt(backend_of(state), {a, len, kDim}, {b, rows, kDim}, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len * rows));
  label(state);
}

}  // namespace

BENCHMARK(BM_NearestRow)->ArgsProduct({{1000, 20000, 100000}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_RowDots)->ArgsProduct({{1000, 20000, 100000}, {0, 1}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_GemmNt)->ArgsProduct({{1000, 20000}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
