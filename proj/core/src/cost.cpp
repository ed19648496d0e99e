#include "patchdrop/cost.hpp"

#include <cstdio>

#include "patchdrop/flops.hpp"
#include "patchdrop/sampler.hpp"

namespace patchdrop::cost {

std::uint64_t theoretical_flops(std::size_t depth, std::size_t tokens,
                                std::size_t width) {
  if (depth == 0 || tokens == 0 || width == 0) {
    throw Error("theoretical_flops arguments must be positive");
  }
  const std::uint64_t L = depth, N = tokens, d = width;
  return 2 * L * N * N * d + 4 * L * N * d * d;
}

double relative_compute(double rate, std::size_t tokens, std::size_t width) {
  if (!(rate > 0.0) || rate > 1.0) {
    throw InvalidRate("keep rate " + std::to_string(rate) + " outside (0, 1]");
  }
  const double n = static_cast<double>(tokens);
  const double d = static_cast<double>(width);
  return rate * (rate * n + 2.0 * d) / (n + 2.0 * d);
}

std::uint64_t empirical_flops(const ModelConfig& config,
                              std::size_t kept_patches) {
  config.validate();
  const std::size_t n = config.patch_count();
  if (kept_patches < 1 || kept_patches > n) {
    throw Error("kept patch count " + std::to_string(kept_patches) +
                " outside [1, " + std::to_string(n) + "]");
  }

  flops::CountOnlyScope count_only;
  const std::uint64_t before = flops::count();

  ViTParams params = ViTParams::hollow(config);
  ImageBatch images = ImageBatch::wrap(
      Tensor::hollow({1, config.channels, config.image_h, config.image_w}));
  TokenBatch tokens = vit::tokenize(params, images);
  if (kept_patches < n) {
    KeepSet keep;
    keep.indices.resize(kept_patches);
    for (std::size_t i = 0; i < kept_patches; ++i) keep.indices[i] = i;
    keep.effective_rate =
        static_cast<double>(kept_patches) / static_cast<double>(n);
    tokens = apply_dropout(tokens, keep);
  }
  (void)vit::forward(params, tokens);

  const std::uint64_t after = flops::count();
  // Leave the caller's meter exactly as found.
  flops::reset();
  flops::add(before);
  return after - before;
}

std::uint64_t activation_elements(const ModelConfig& config,
                                  std::size_t kept_patches,
                                  std::size_t batch) {
  config.validate();
  if (batch == 0) return 0;
  const std::uint64_t B = batch;
  const std::uint64_t n = config.patch_count();
  const std::uint64_t t = kept_patches + 1;
  const std::uint64_t d = config.width;
  constexpr std::uint64_t c1 = 10;  // token-shaped buffers per block
  constexpr std::uint64_t c2 = 1;   // attention-map workspace per block
  const std::uint64_t embed_stage = n * config.patch_dim() + (n + 1) * d;
  const std::uint64_t per_block = c1 * t * d + c2 * t * t;
  return B * (embed_stage + config.depth * per_block + config.classes);
}

CostReport report(const ModelConfig& config, double rate,
                  const std::string& config_id) {
  const std::size_t n = config.patch_count();
  const std::size_t k = kept_count(rate, n);
  CostReport r;
  r.config_id = config_id;
  r.n_patches = n;
  r.kept_patches = k;
  r.token_count = k + 1;
  r.theoretical_flops = theoretical_flops(config.depth, k, config.width);
  r.empirical_flops = empirical_flops(config, k);
  r.relative_theoretical = relative_compute(rate, n, config.width);
  r.relative_empirical =
      static_cast<double>(r.empirical_flops) /
      static_cast<double>(empirical_flops(config, n));
  r.activation_elements = activation_elements(config, k, 1);
  r.parameter_count = parameter_count(config);
  return r;
}

std::string csv_header() {
  return "config,n_patches,kept,tokens,theoretical_flops,empirical_flops,"
         "relative_theoretical,relative_empirical,activation_elements,"
         "parameters";
}

std::string csv_row(const CostReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s,%zu,%zu,%zu,%llu,%llu,%.9g,%.9g,%llu,%zu",
                r.config_id.c_str(), r.n_patches, r.kept_patches,
                r.token_count,
                static_cast<unsigned long long>(r.theoretical_flops),
                static_cast<unsigned long long>(r.empirical_flops),
                r.relative_theoretical, r.relative_empirical,
                static_cast<unsigned long long>(r.activation_elements),
                r.parameter_count);
  return buf;
}

}  // namespace patchdrop::cost
