#include <benchmark/benchmark.h>

#include "nodefilter/graph.hpp"
#include "nodefilter/rng.hpp"
#include "nodefilter/sparse.hpp"
#include "nodefilter/tokens.hpp"

namespace {

using namespace nodefilter;

DenseMatrix signal(std::size_t n, std::size_t d) {
  Rng rng(3);
  DenseMatrix x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) x(i, c) = rng.uniform(-1, 1);
  return x;
}

void BM_Spmm(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const SparseMatrix a = normalized_adjacency(grid_graph(side, side));
  const DenseMatrix x = signal(side * side, 4);
  for (auto _ : state) benchmark::DoNotOptimize(spmm(a, x));
  state.counters["nnz"] = static_cast<double>(a.nnz());
}
BENCHMARK(BM_Spmm)->Arg(32)->Arg(45)->Arg(64)->Arg(128);

// Time per token tensor should grow linearly in edge count.
void BM_Tokens(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto basis = static_cast<BasisKind>(state.range(1));
  const Graph g = grid_graph(side, side);
  const DenseMatrix x = signal(g.n_nodes(), 4);
  for (auto _ : state) benchmark::DoNotOptimize(compute_tokens(g, x, basis, 10));
  state.counters["edges"] = static_cast<double>(g.n_edges());
}
BENCHMARK(BM_Tokens)
    ->ArgsProduct({{32, 45, 64}, {static_cast<long>(BasisKind::Monomial), static_cast<long>(BasisKind::Chebyshev),
                                  static_cast<long>(BasisKind::Bernstein), static_cast<long>(BasisKind::Optimal)}})
    ->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
