#include <benchmark/benchmark.h>

#include "patchdrop/ops.hpp"
#include "patchdrop/rng.hpp"

using namespace patchdrop;

namespace {

Tensor random_square(std::size_t n, std::uint64_t seed) {
  Rng rng = rng_at(seed, Stream::kDataGen);
  Tensor t = Tensor::zeros({n, n});
  for (double& v : t.values_mut()) v = rng.next_double() - 0.5;
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Tensor a = random_square(n, 1);
  Tensor b = random_square(n, 2);
  for (auto _ : state) {
    Tensor c = ops::matmul(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n *
                          n * n);
}

void BM_BatchedAttentionShapes(benchmark::State& state) {
  // The shape pattern of the training hot loop: [B*h, T, hd] x [B*h, hd, T].
  const std::size_t bh = 128, T = 33, hd = 8;
  Rng rng = rng_at(3, Stream::kDataGen);
  Tensor q = Tensor::zeros({bh, T, hd});
  Tensor k = Tensor::zeros({bh, hd, T});
  for (double& v : q.values_mut()) v = rng.next_double() - 0.5;
  for (double& v : k.values_mut()) v = rng.next_double() - 0.5;
  for (auto _ : state) {
    Tensor s = ops::matmul(q, k);
    benchmark::DoNotOptimize(s.values().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * bh *
                          T * hd * T);
}

}  // namespace

BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256)->Arg(512);
BENCHMARK(BM_BatchedAttentionShapes);
