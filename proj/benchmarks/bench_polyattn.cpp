#include <benchmark/benchmark.h>

#include "nodefilter/autodiff.hpp"
#include "nodefilter/polyattn.hpp"
#include "nodefilter/rng.hpp"

namespace {

using namespace nodefilter;

ad::Tensor random_tokens(std::size_t batch, std::size_t t, std::size_t d) {
  Rng rng(5);
  ad::Tensor h({batch, t, d});
  for (double& v : h.values()) v = rng.uniform(-1, 1);
  return h;
}

// args: batch, order, dim, heads
PolyAttnConfig config(const benchmark::State& state) {
  PolyAttnConfig cfg;
  cfg.order = static_cast<std::size_t>(state.range(1));
  cfg.dim = static_cast<std::size_t>(state.range(2));
  cfg.heads = static_cast<std::size_t>(state.range(3));
  return cfg;
}

void BM_PolyAttnForward(benchmark::State& state) {
  const PolyAttnConfig cfg = config(state);
  Rng rng(1);
  PolyAttnParams p = PolyAttnParams::init(cfg, rng);
  const ad::Tensor h = random_tokens(static_cast<std::size_t>(state.range(0)), cfg.order + 1, cfg.dim);
  for (auto _ : state) {
    ad::Tape tape;
    benchmark::DoNotOptimize(multihead_polyattn_forward(tape, tape.constant(h), p).tokens.value());
  }
}

void BM_PolyAttnBackward(benchmark::State& state) {
  const PolyAttnConfig cfg = config(state);
  Rng rng(1);
  PolyAttnParams p = PolyAttnParams::init(cfg, rng);
  const ad::Tensor h = random_tokens(static_cast<std::size_t>(state.range(0)), cfg.order + 1, cfg.dim);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var loss = ad::sum_all(multihead_polyattn_forward(tape, tape.constant(h), p).tokens);
    tape.backward(loss);
  }
}

BENCHMARK(BM_PolyAttnForward)->Args({576, 10, 16, 1})->Args({576, 10, 16, 4})->Args({2304, 10, 16, 4})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PolyAttnBackward)->Args({576, 10, 16, 1})->Args({576, 10, 16, 4})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
