#include <benchmark/benchmark.h>

#include "patchdrop/cost.hpp"
#include "patchdrop/model.hpp"
#include "patchdrop/rng.hpp"

using namespace patchdrop;

namespace {

ModelConfig desk_config() {
  ModelConfig mc;
  mc.depth = 2;
  mc.width = 32;
  mc.heads = 4;
  mc.patch = 4;
  mc.image_h = mc.image_w = 32;
  mc.classes = 4;
  mc.channels = 1;
  return mc;
}

void BM_DeskForward(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  ModelConfig mc = desk_config();
  ViTParams params = ViTParams::init(mc, 1);
  Rng rng = rng_at(2, Stream::kDataGen);
  Tensor img = Tensor::zeros({batch, 1, 32, 32});
  for (double& v : img.values_mut()) v = rng.next_double();
  ImageBatch images = ImageBatch::wrap(img);
  for (auto _ : state) {
    TokenBatch tokens = vit::tokenize(params, images);
    Tensor logits = vit::forward(params, tokens);
    benchmark::DoNotOptimize(logits.values().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          batch);
}

void BM_CountOnlyBase896(benchmark::State& state) {
  // Counting a 450-GFLOP configuration must stay in the milliseconds range.
  ModelConfig mc = ModelConfig::variant("base");
  mc.image_h = mc.image_w = 896;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cost::empirical_flops(mc, 3136));
  }
}

}  // namespace

BENCHMARK(BM_DeskForward)->Arg(1)->Arg(32);
BENCHMARK(BM_CountOnlyBase896);
