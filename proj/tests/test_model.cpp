#include <doctest.h>

#include <cmath>

#include "patchdrop/flops.hpp"
#include "patchdrop/model.hpp"
#include "patchdrop/ops.hpp"
#include "patchdrop/trainer.hpp"
#include "test_util.hpp"

using namespace patchdrop;
using testutil::random_tensor;
using testutil::temp_dir;

namespace {

ModelConfig small_config() {
  ModelConfig mc;
  mc.depth = 2;
  mc.width = 16;
  mc.heads = 2;
  mc.patch = 4;
  mc.image_h = mc.image_w = 8;
  mc.classes = 3;
  mc.channels = 1;
  return mc;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("variant table") {
  CHECK(ModelConfig::variant("tiny").width == 192);
  CHECK(ModelConfig::variant("tiny").heads == 3);
  CHECK(ModelConfig::variant("small").width == 384);
  CHECK(ModelConfig::variant("base").width == 768);
  CHECK(ModelConfig::variant("base").depth == 12);
  CHECK(ModelConfig::variant("large").width == 1024);
  CHECK(ModelConfig::variant("large").depth == 24);
  CHECK_THROWS(ModelConfig::variant("huge"));
}

TEST_CASE("config validation") {
  ModelConfig mc = small_config();
  mc.heads = 3;  // 16 % 3 != 0
  CHECK_THROWS(mc.validate());
  mc = small_config();
  mc.image_h = 10;
  CHECK_THROWS_AS(mc.validate(), IndivisibleImage);
}

TEST_CASE("parameter count is a pure function of the config") {
  const ModelConfig mc = small_config();
  CHECK(ViTParams::init(mc, 1).parameter_count() == parameter_count(mc));
  CHECK(ViTParams::init(mc, 2).parameter_count() == parameter_count(mc));

  // Hand formula for this geometry.
  const std::size_t d = 16, n = 4, pd = 16, hid = 64, k = 3, L = 2;
  const std::size_t per_block =
      2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d +
      (d * hid + hid) + (hid * d + d);
  const std::size_t expected = pd * d + (n + 1) * d + d + L * per_block +
                               2 * d + d * k + k;
  CHECK(parameter_count(mc) == expected);
}

TEST_CASE("initialization is deterministic and finite") {
  const ModelConfig mc = small_config();
  ViTParams a = ViTParams::init(mc, 7);
  ViTParams b = ViTParams::init(mc, 7);
  for (std::size_t i = 0; i < a.all().size(); ++i) {
    const auto av = a.all()[i].tensor.values();
    const auto bv = b.all()[i].tensor.values();
    for (std::size_t j = 0; j < av.size(); ++j) CHECK(av[j] == bv[j]);
  }
  CHECK(a.all_finite());
  // Truncated normal stays within 2 sigma.
  for (double v : a.at("patch_proj").tensor.values()) {
    CHECK(std::abs(v) <= 0.04 + 1e-12);
  }
}

TEST_CASE("keep-rate-1 dropout is bitwise identical to no dropout") {
  const ModelConfig mc = small_config();
  ViTParams params = ViTParams::init(mc, 3);
  Rng rng = rng_at(4, Stream::kDataGen);
  ImageBatch images =
      ImageBatch::wrap(random_tensor({2, 1, 8, 8}, rng, false, 0.0, 1.0));
  TokenBatch full = vit::tokenize(params, images);
  Tensor ref = vit::forward(params, full);

  KeepSet all;
  all.indices = {0, 1, 2, 3};
  all.effective_rate = 1.0;
  TokenBatch dropped = apply_dropout(full, all);
  Tensor out = vit::forward(params, dropped);
  for (std::size_t i = 0; i < ref.numel(); ++i) {
    CHECK(out.values()[i] == ref.values()[i]);
  }
}

TEST_CASE("logit shape for ViT-Base geometry") {
  flops::CountOnlyScope scope;
  ModelConfig mc;  // defaults: base at 224^2, 1000 classes
  ViTParams params = ViTParams::hollow(mc);
  ImageBatch images = ImageBatch::wrap(Tensor::hollow({2, 3, 224, 224}));
  TokenBatch tokens = vit::tokenize(params, images);
  CHECK(tokens.seq_len() == 197);
  Tensor logits = vit::forward(params, tokens);
  CHECK(logits.shape() == Shape{2, 1000});
}

TEST_CASE("permuting non-CLS tokens leaves logits unchanged") {
  const ModelConfig mc = small_config();
  ViTParams params = ViTParams::init(mc, 5);
  Rng rng = rng_at(6, Stream::kDataGen);
  ImageBatch images =
      ImageBatch::wrap(random_tensor({1, 1, 8, 8}, rng, false, 0.0, 1.0));
  TokenBatch tokens = vit::tokenize(params, images);
  Tensor ref = vit::forward(params, tokens);

  TokenBatch shuffled = tokens;
  shuffled.tokens =
      ops::gather_rows(tokens.tokens, std::vector<std::size_t>{0, 3, 1, 4, 2});
  Tensor out = vit::forward(params, shuffled);
  for (std::size_t i = 0; i < ref.numel(); ++i) {
    CHECK(std::abs(out.values()[i] - ref.values()[i]) < 1e-9);
  }
}

TEST_CASE("single-token attention reduces to projected value") {
  const ModelConfig mc = small_config();
  ViTParams params = ViTParams::init(mc, 8);
  Rng rng = rng_at(9, Stream::kDataGen);
  Tensor x = random_tensor({1, 1, 16}, rng, false);
  Tensor out = vit::attention(x, params, 0);

  // With T=1 the attention weight is exactly 1, so the output is the value
  // projection pushed through the output projection.
  const auto qkv_w = params.at("blk0.qkv_w").tensor.values();
  const auto qkv_b = params.at("blk0.qkv_b").tensor.values();
  const auto out_w = params.at("blk0.out_w").tensor.values();
  const auto out_b = params.at("blk0.out_b").tensor.values();
  const auto xv = x.values();
  std::vector<double> v(16);
  for (std::size_t j = 0; j < 16; ++j) {
    double acc = qkv_b[32 + j];
    for (std::size_t i = 0; i < 16; ++i) {
      acc += xv[i] * qkv_w[i * 48 + 32 + j];
    }
    v[j] = acc;
  }
  for (std::size_t j = 0; j < 16; ++j) {
    double acc = out_b[j];
    for (std::size_t i = 0; i < 16; ++i) acc += v[i] * out_w[i * 16 + j];
    CHECK(std::abs(out.values()[j] - acc) < 1e-12);
  }
}

TEST_CASE("attention matches an independent reference implementation") {
  const ModelConfig mc = small_config();
  ViTParams params = ViTParams::init(mc, 10);
  Rng rng = rng_at(11, Stream::kDataGen);
  const std::size_t B = 2, T = 5, d = 16, h = 2, hd = 8;
  Tensor x = random_tensor({B, T, d}, rng, false);
  Tensor out = vit::attention(x, params, 1);

  const auto qkv_w = params.at("blk1.qkv_w").tensor.values();
  const auto qkv_b = params.at("blk1.qkv_b").tensor.values();
  const auto out_w = params.at("blk1.out_w").tensor.values();
  const auto out_b = params.at("blk1.out_b").tensor.values();
  const auto xv = x.values();

  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> q(T * d), k(T * d), v(T * d);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < 3 * d; ++j) {
        double acc = qkv_b[j];
        for (std::size_t i = 0; i < d; ++i) {
          acc += xv[(b * T + t) * d + i] * qkv_w[i * 3 * d + j];
        }
        if (j < d) q[t * d + j] = acc;
        else if (j < 2 * d) k[t * d + (j - d)] = acc;
        else v[t * d + (j - 2 * d)] = acc;
      }
    }
    std::vector<double> ctx(T * d, 0.0);
    for (std::size_t head = 0; head < h; ++head) {
      for (std::size_t t = 0; t < T; ++t) {
        std::vector<double> scores(T);
        double mx = -1e300;
        for (std::size_t u = 0; u < T; ++u) {
          double acc = 0.0;
          for (std::size_t j = 0; j < hd; ++j) {
            acc += q[t * d + head * hd + j] * k[u * d + head * hd + j];
          }
          scores[u] = acc / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, scores[u]);
        }
        double sum = 0.0;
        for (double& s : scores) {
          s = std::exp(s - mx);
          sum += s;
        }
        for (double& s : scores) s /= sum;
        for (std::size_t j = 0; j < hd; ++j) {
          double acc = 0.0;
          for (std::size_t u = 0; u < T; ++u) {
            acc += scores[u] * v[u * d + head * hd + j];
          }
          ctx[t * d + head * hd + j] = acc;
        }
      }
    }
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t j = 0; j < d; ++j) {
        double acc = out_b[j];
        for (std::size_t i = 0; i < d; ++i) {
          acc += ctx[t * d + i] * out_w[i * d + j];
        }
        CHECK(std::abs(out.at({b, t, j}) - acc) < 1e-10);
      }
    }
  }
}

TEST_CASE("MSA MAC count matches the closed form exactly") {
  flops::CountOnlyScope scope;
  ModelConfig mc;  // base geometry
  ViTParams params = ViTParams::hollow(mc);
  Tensor x = Tensor::hollow({1, 197, 768});
  flops::reset();
  vit::attention(x, params, 0);
  const std::uint64_t msa = flops::count();
  const std::uint64_t T = 197, d = 768;
  CHECK(msa == 4 * T * d * d + 2 * T * T * d);
  flops::reset();
}

TEST_CASE("predict yields probabilities and honors eval keep rates") {
  const ModelConfig mc = small_config();
  ViTParams params = ViTParams::init(mc, 12);
  Rng rng = rng_at(13, Stream::kDataGen);
  ImageBatch images =
      ImageBatch::wrap(random_tensor({3, 1, 8, 8}, rng, false, 0.0, 1.0));

  Tensor probs = vit::predict(params, images);
  for (std::size_t b = 0; b < 3; ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) s += probs.at({b, k});
    CHECK(std::abs(s - 1.0) < 1e-12);
  }

  Tensor full_rate = vit::predict(params, images, 1.0);
  for (std::size_t i = 0; i < probs.numel(); ++i) {
    CHECK(full_rate.values()[i] == probs.values()[i]);
  }

  Tensor reduced = vit::predict(params, images, 0.5, /*seed=*/3);
  Tensor reduced2 = vit::predict(params, images, 0.5, /*seed=*/3);
  for (std::size_t i = 0; i < reduced.numel(); ++i) {
    CHECK(reduced.values()[i] == reduced2.values()[i]);
  }
  CHECK_THROWS_AS(vit::predict(params, images, 1.5), InvalidRate);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const ModelConfig mc = small_config();
  ViTParams params = ViTParams::init(mc, 21);
  const auto dir = temp_dir("ckpt");
  const auto p1 = dir / "a.pdvt";
  const auto p2 = dir / "b.pdvt";
  save_checkpoint(p1, params);
  ViTParams loaded = load_checkpoint(p1);
  CHECK(loaded.config().width == mc.width);
  for (std::size_t i = 0; i < params.all().size(); ++i) {
    const auto a = params.all()[i].tensor.values();
    const auto b = loaded.all()[i].tensor.values();
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
  }
  save_checkpoint(p2, loaded);
  CHECK(testutil::read_file(p1) == testutil::read_file(p2));
}

TEST_CASE("checkpoint errors") {
  const auto dir = temp_dir("ckpt_err");
  const auto bad = dir / "bad.pdvt";
  {
    std::ofstream os(bad, std::ios::binary);
    os << "NOPE";
  }
  CHECK_THROWS_AS(load_checkpoint(bad), BadMagic);

  const ModelConfig mc = small_config();
  ViTParams params = ViTParams::init(mc, 1);
  const auto good = dir / "good.pdvt";
  save_checkpoint(good, params);
  // Truncate the file in the middle of the tensor payload.
  const std::string bytes = testutil::read_file(good);
  {
    std::ofstream os(dir / "trunc.pdvt", std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.pdvt"), TruncatedFile);
}

TEST_SUITE_END();
