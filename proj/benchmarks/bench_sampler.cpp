#include <benchmark/benchmark.h>

#include "patchdrop/sampler.hpp"

using namespace patchdrop;

namespace {

void BM_DrawKeepSet(benchmark::State& state) {
  const Strategy strategy = static_cast<Strategy>(state.range(0));
  const std::size_t side = static_cast<std::size_t>(state.range(1));
  SamplingSpec spec = SamplingSpec::fixed(strategy, 0.25, 9, side, side);
  std::uint64_t step = 0;
  for (auto _ : state) {
    KeepSet ks = draw_keep_set(spec, step++);
    benchmark::DoNotOptimize(ks.indices.data());
  }
  state.SetLabel(strategy_name(strategy) + " " + std::to_string(side) + "x" +
                 std::to_string(side));
}

}  // namespace

BENCHMARK(BM_DrawKeepSet)
    ->Args({0, 14})
    ->Args({1, 14})
    ->Args({2, 14})
    ->Args({3, 14})
    ->Args({0, 56})
    ->Args({1, 56})
    ->Args({2, 56})
    ->Args({3, 56});
