#include <doctest.h>

#include <cmath>

#include "patchdrop/cost.hpp"
#include "patchdrop/flops.hpp"
#include "patchdrop/ops.hpp"
#include "test_util.hpp"

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

/// Independent route: evaluate 2LN^2d + 4LNd^2 in 128-bit integers with a
/// different factoring.
unsigned __int128 theory_wide(std::uint64_t L, std::uint64_t N,
                              std::uint64_t d) {
  const unsigned __int128 two_l_n_d =
      static_cast<unsigned __int128>(2) * L * N * d;
  return two_l_n_d * (N + 2 * d);
}

}  // namespace

TEST_SUITE_BEGIN("cost");

TEST_CASE("theoretical flops exact anchors") {
  CHECK(cost::theoretical_flops(12, 196, 768) == 6257147904ULL);
  CHECK(cost::theoretical_flops(1, 1, 1) == 6);
  // Linear in depth, exactly.
  CHECK(cost::theoretical_flops(24, 196, 768) ==
        2 * cost::theoretical_flops(12, 196, 768));
  CHECK(cost::theoretical_flops(7, 50, 64) ==
        7 * cost::theoretical_flops(1, 50, 64));
}

TEST_CASE("theoretical flops agree with a wide-integer oracle") {
  Rng rng = rng_at(31, Stream::kDataGen);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t L = 1 + rng.next_below(64);
    const std::uint64_t N = 1 + rng.next_below(4096);
    const std::uint64_t d = 1 + rng.next_below(2048);
    const unsigned __int128 wide = theory_wide(L, N, d);
    REQUIRE(wide <= static_cast<unsigned __int128>(~0ULL));
    CHECK(cost::theoretical_flops(L, N, d) ==
          static_cast<std::uint64_t>(wide));
  }
}

TEST_CASE("relative compute closed form") {
  CHECK(cost::relative_compute(1.0, 196, 768) == 1.0);
  CHECK(cost::relative_compute(1.0, 9999, 13) == 1.0);
  // Frozen from exact rational arithmetic: 0.5*(98+1536)/(196+1536).
  CHECK(std::abs(cost::relative_compute(0.5, 196, 768) -
                 0.47170900692840646651) < 1e-15);
  // Quadratic limit at N = 10^7.
  CHECK(std::abs(cost::relative_compute(0.25, 10000000, 768) - 0.0625) < 1e-3);
  CHECK(std::abs(cost::relative_compute(0.5, 10000000, 768) - 0.25) < 1e-3);
  CHECK_THROWS_AS(cost::relative_compute(0.0, 10, 10), InvalidRate);
  CHECK_THROWS_AS(cost::relative_compute(1.2, 10, 10), InvalidRate);
}

TEST_CASE("empirical flops reproduce published anchors") {
  ModelConfig base;  // ViT-Base at 224^2, patch 16, RGB
  const double full = static_cast<double>(cost::empirical_flops(base, 196));
  CHECK(std::abs(full - 17.58e9) / 17.58e9 < 0.02);

  ModelConfig tiny = ModelConfig::variant("tiny");
  const double t = static_cast<double>(cost::empirical_flops(tiny, 196));
  CHECK(std::abs(t - 1.26e9) / 1.26e9 < 0.03);
}

TEST_CASE("empirical flops equal the hand formula for a small model") {
  const ModelConfig mc = desk_config();  // N=64, d=32, L=2, pd=16
  for (std::size_t k : {1ul, 16ul, 32ul, 64ul}) {
    const std::uint64_t T = k + 1;
    const std::uint64_t expect = 64ULL * 16 * 32 +              // embedding
                                 2 * (12 * T * 32 * 32 +        // mlp+qkv+out
                                      2 * T * T * 32) +         // attention
                                 32 * 4;                        // head
    CHECK(cost::empirical_flops(mc, k) == expect);
  }
}

TEST_CASE("count-only metering equals a real instrumented forward") {
  const ModelConfig mc = desk_config();
  const std::uint64_t counted = cost::empirical_flops(mc, 16);

  ViTParams params = ViTParams::init(mc, 3);
  Rng rng = rng_at(41, Stream::kDataGen);
  ImageBatch images = ImageBatch::wrap(
      testutil::random_tensor({1, 1, 32, 32}, rng, false, 0.0, 1.0));
  flops::reset();
  TokenBatch tokens = vit::tokenize(params, images);
  KeepSet keep;
  for (std::size_t i = 0; i < 16; ++i) keep.indices.push_back(i);
  keep.effective_rate = 0.25;
  TokenBatch dropped = apply_dropout(tokens, keep);
  vit::forward(params, dropped);
  CHECK(flops::count() == counted);
  flops::reset();
}

TEST_CASE("empirical flops strictly increase with kept patches") {
  const ModelConfig mc = desk_config();
  std::uint64_t prev = 0;
  for (std::size_t k = 1; k <= 64; k += 3) {
    const std::uint64_t f = cost::empirical_flops(mc, k);
    CHECK(f > prev);
    prev = f;
  }
}

TEST_CASE("empirical flops are exactly linear in depth") {
  ModelConfig mc = desk_config();
  auto at_depth = [&](std::size_t L) {
    ModelConfig c = mc;
    c.depth = L;
    return cost::empirical_flops(c, 32);
  };
  const std::uint64_t block = at_depth(2) - at_depth(1);
  CHECK(at_depth(4) == at_depth(1) + 3 * block);
  CHECK(at_depth(8) == at_depth(1) + 7 * block);
}

TEST_CASE("empirical relative savings trail the theoretical curve") {
  for (const char* name : {"tiny", "base"}) {
    ModelConfig mc = ModelConfig::variant(name);
    const std::size_t n = mc.patch_count();
    const std::uint64_t full = cost::empirical_flops(mc, n);
    for (double rate : {0.5, 0.25, 0.1}) {
      const std::size_t k = kept_count(rate, n);
      const double rel_emp =
          static_cast<double>(cost::empirical_flops(mc, k)) /
          static_cast<double>(full);
      CHECK(rel_emp >= cost::relative_compute(rate, n, mc.width));
    }
  }
}

TEST_CASE("activation element model") {
  ModelConfig base;  // ViT-Base defaults
  CHECK(cost::activation_elements(base, 196, 0) == 0);

  // Monotone in each extent.
  const std::uint64_t ref = cost::activation_elements(base, 100, 2);
  CHECK(cost::activation_elements(base, 101, 2) > ref);
  CHECK(cost::activation_elements(base, 100, 3) > ref);
  ModelConfig deeper = base;
  deeper.depth += 1;
  CHECK(cost::activation_elements(deeper, 100, 2) > ref);
  ModelConfig wider = base;
  wider.width += wider.heads;
  CHECK(cost::activation_elements(wider, 100, 2) > ref);

  // Base at 896^2: full vs quarter keep stays in the documented band and
  // sits below the keep rate (attention maps shrink quadratically).
  ModelConfig big = base;
  big.image_h = big.image_w = 896;
  const double ratio =
      static_cast<double>(cost::activation_elements(big, 784, 1)) /
      static_cast<double>(cost::activation_elements(big, 3136, 1));
  CHECK(ratio >= 0.10);
  CHECK(ratio <= 0.25);
}

TEST_CASE("cost report and CSV schema") {
  const ModelConfig mc = desk_config();
  cost::CostReport r = cost::report(mc, 0.5, "desk@32");
  CHECK(r.n_patches == 64);
  CHECK(r.kept_patches == 32);
  CHECK(r.token_count == 33);
  CHECK(r.relative_empirical > 0.0);
  CHECK(r.relative_empirical <= 1.0);
  CHECK(r.relative_theoretical <= r.relative_empirical);
  CHECK(r.parameter_count == parameter_count(mc));

  cost::CostReport full = cost::report(mc, 1.0, "desk@32");
  CHECK(full.relative_empirical == 1.0);
  CHECK(full.relative_theoretical == 1.0);

  const std::string header = cost::csv_header();
  CHECK(testutil::count_substr(header, ",") == 9);
  CHECK(testutil::count_substr(cost::csv_row(r), ",") == 9);
}

TEST_SUITE_END();
