#include "patchdrop/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "patchdrop/flops.hpp"
#include "patchdrop/ops.hpp"
#include "patchdrop/rng.hpp"

namespace patchdrop {

namespace {
constexpr double kLnEps = 1e-6;
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[4] = {'P', 'D', 'V', 'T'};
}  // namespace

void ModelConfig::validate() const {
  if (depth == 0 || width == 0 || heads == 0 || patch == 0 || classes == 0 ||
      channels == 0 || mlp_ratio == 0) {
    throw Error("model config extents must be positive");
  }
  if (width % heads != 0) {
    throw Error("embedding width " + std::to_string(width) +
                " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (image_h % patch != 0 || image_w % patch != 0) {
    throw IndivisibleImage("image " + std::to_string(image_h) + "x" +
                           std::to_string(image_w) +
                           " is not divisible by patch size " +
                           std::to_string(patch));
  }
}

ModelConfig ModelConfig::variant(const std::string& name) {
  ModelConfig c;
  if (name == "tiny") {
    c.width = 192; c.heads = 3; c.depth = 12;
  } else if (name == "small") {
    c.width = 384; c.heads = 6; c.depth = 12;
  } else if (name == "base") {
    c.width = 768; c.heads = 12; c.depth = 12;
  } else if (name == "large") {
    c.width = 1024; c.heads = 16; c.depth = 24;
  } else {
    throw Error("unknown model variant '" + name + "'");
  }
  return c;
}

ViTParams ViTParams::build(
    const ModelConfig& config,
    const std::function<Tensor(Shape, const char*)>& make) {
  config.validate();
  ViTParams p;
  p.config_ = config;
  const std::size_t d = config.width;
  const std::size_t n = config.patch_count();
  const std::size_t pd = config.patch_dim();
  const std::size_t hid = config.hidden();
  const std::size_t k = config.classes;

  auto push = [&p, &make](const std::string& name, Shape shape,
                          const char* kind, bool decayable) {
    Tensor t = make(std::move(shape), kind);
    t.set_requires_grad(true);
    p.params_.push_back(Param{name, std::move(t), decayable});
  };

  push("patch_proj", {pd, d}, "proj", true);
  push("pos", {n + 1, d}, "proj", false);
  push("cls", {d}, "zero", false);
  for (std::size_t b = 0; b < config.depth; ++b) {
    const std::string pre = "blk" + std::to_string(b) + ".";
    push(pre + "ln1_g", {d}, "one", false);
    push(pre + "ln1_b", {d}, "zero", false);
    push(pre + "qkv_w", {d, 3 * d}, "proj", true);
    push(pre + "qkv_b", {3 * d}, "zero", false);
    push(pre + "out_w", {d, d}, "proj", true);
    push(pre + "out_b", {d}, "zero", false);
    push(pre + "ln2_g", {d}, "one", false);
    push(pre + "ln2_b", {d}, "zero", false);
    push(pre + "fc1_w", {d, hid}, "proj", true);
    push(pre + "fc1_b", {hid}, "zero", false);
    push(pre + "fc2_w", {hid, d}, "proj", true);
    push(pre + "fc2_b", {d}, "zero", false);
  }
  push("final_ln_g", {d}, "one", false);
  push("final_ln_b", {d}, "zero", false);
  push("head_w", {d, k}, "proj", true);
  push("head_b", {k}, "zero", false);
  return p;
}

ViTParams ViTParams::init(const ModelConfig& config, std::uint64_t seed) {
  Rng rng = rng_at(seed, Stream::kParamInit);
  return build(config, [&rng](Shape shape, const char* kind) {
    if (std::strcmp(kind, "proj") == 0) {
      Tensor t = Tensor::zeros(shape);
      for (double& v : t.values_mut()) v = rng.next_trunc_normal(0.02);
      return t;
    }
    if (std::strcmp(kind, "one") == 0) return Tensor::full(shape, 1.0);
    return Tensor::zeros(shape);
  });
}

ViTParams ViTParams::hollow(const ModelConfig& config) {
  return build(config, [](Shape shape, const char*) {
    return Tensor::hollow(std::move(shape));
  });
}

ViTParams ViTParams::zeros(const ModelConfig& config) {
  return build(config, [](Shape shape, const char*) {
    return Tensor::zeros(std::move(shape));
  });
}

Param& ViTParams::at(const std::string& name) {
  for (Param& p : params_) {
    if (p.name == name) return p;
  }
  throw Error("unknown parameter '" + name + "'");
}

const Param& ViTParams::at(const std::string& name) const {
  return const_cast<ViTParams*>(this)->at(name);
}

std::size_t ViTParams::parameter_count() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.tensor.numel();
  return n;
}

void ViTParams::zero_grads() {
  for (Param& p : params_) p.tensor.zero_grad();
}

bool ViTParams::all_finite() const {
  for (const Param& p : params_) {
    for (double v : p.tensor.values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

ViTParams ViTParams::clone() const {
  ViTParams out;
  out.config_ = config_;
  out.params_.reserve(params_.size());
  for (const Param& p : params_) {
    std::vector<double> data(p.tensor.values().begin(),
                             p.tensor.values().end());
    Tensor t = Tensor::from(p.tensor.shape(), std::move(data));
    t.set_requires_grad(p.tensor.requires_grad());
    out.params_.push_back(Param{p.name, std::move(t), p.decayable});
  }
  return out;
}

std::size_t parameter_count(const ModelConfig& config) {
  return ViTParams::hollow(config).parameter_count();
}

namespace vit {

TokenBatch tokenize(const ViTParams& params, const ImageBatch& images) {
  const ModelConfig& c = params.config();
  if (images.channels != c.channels || images.height != c.image_h ||
      images.width != c.image_w) {
    throw ShapeMismatch("image batch geometry does not match the model");
  }
  Tensor patches = patchify(images, c.patch);
  return embed_tokens(patches, params.patch_proj(), params.pos(), params.cls(),
                      c.grid_rows(), c.grid_cols());
}

Tensor attention(const Tensor& x, const ViTParams& params, std::size_t block) {
  const ModelConfig& c = params.config();
  const std::size_t B = x.extent(0), T = x.extent(1), d = x.extent(2);
  if (d != c.width) throw ShapeMismatch("attention input width mismatch");
  const std::size_t h = c.heads, hd = c.head_dim();
  const std::string pre = "blk" + std::to_string(block) + ".";

  Tensor qkv = ops::add(ops::matmul(x, params.at(pre + "qkv_w").tensor),
                        params.at(pre + "qkv_b").tensor);  // [B, T, 3d]
  Tensor q = ops::slice_last(qkv, 0, d);
  Tensor kt = ops::slice_last(qkv, d, d);
  Tensor v = ops::slice_last(qkv, 2 * d, d);
  // [B, T, d] -> [B, h, T, hd]
  auto heads_view = [&](const Tensor& t) {
    return ops::permute(ops::reshape(t, {B, T, h, hd}), {0, 2, 1, 3});
  };
  q = heads_view(q);
  kt = heads_view(kt);
  v = heads_view(v);

  Tensor scores = ops::scale(ops::matmul(q, ops::permute(kt, {0, 1, 3, 2})),
                             1.0 / std::sqrt(static_cast<double>(hd)));
  Tensor attn = ops::softmax(scores, -1);        // rows sum to 1
  Tensor ctx = ops::matmul(attn, v);             // [B, h, T, hd]
  ctx = ops::reshape(ops::permute(ctx, {0, 2, 1, 3}), {B, T, d});
  return ops::add(ops::matmul(ctx, params.at(pre + "out_w").tensor),
                  params.at(pre + "out_b").tensor);
}

Tensor forward(const ViTParams& params, const TokenBatch& tokens) {
  const ModelConfig& c = params.config();
  Tensor x = tokens.tokens;
  if (x.rank() != 3 || x.extent(2) != c.width) {
    throw ShapeMismatch("token batch does not match model width");
  }
  const std::size_t B = x.extent(0);

  for (std::size_t b = 0; b < c.depth; ++b) {
    const std::string pre = "blk" + std::to_string(b) + ".";
    Tensor n1 = ops::layer_norm(x, params.at(pre + "ln1_g").tensor,
                                params.at(pre + "ln1_b").tensor, kLnEps);
    x = ops::add(x, attention(n1, params, b));
    Tensor n2 = ops::layer_norm(x, params.at(pre + "ln2_g").tensor,
                                params.at(pre + "ln2_b").tensor, kLnEps);
    Tensor hdn = ops::gelu(
        ops::add(ops::matmul(n2, params.at(pre + "fc1_w").tensor),
                 params.at(pre + "fc1_b").tensor));
    Tensor mlp_out = ops::add(ops::matmul(hdn, params.at(pre + "fc2_w").tensor),
                              params.at(pre + "fc2_b").tensor);
    x = ops::add(x, mlp_out);
  }

  x = ops::layer_norm(x, params.at("final_ln_g").tensor,
                      params.at("final_ln_b").tensor, kLnEps);
  Tensor cls = ops::reshape(
      ops::gather_rows(x, std::vector<std::size_t>{0}), {B, c.width});
  return ops::add(ops::matmul(cls, params.at("head_w").tensor),
                  params.at("head_b").tensor);
}

Tensor predict(const ViTParams& params, const ImageBatch& images,
               std::optional<double> eval_keep_rate, std::uint64_t seed) {
  TokenBatch tokens = tokenize(params, images);
  if (eval_keep_rate && *eval_keep_rate < 1.0) {
    const ModelConfig& c = params.config();
    SamplingSpec spec = SamplingSpec::fixed(Strategy::kRandom, *eval_keep_rate,
                                            seed, c.grid_rows(),
                                            c.grid_cols());
    std::vector<KeepSet> keeps;
    keeps.reserve(images.batch);
    for (std::size_t b = 0; b < images.batch; ++b) {
      keeps.push_back(draw_keep_set(spec, /*step=*/0, /*sample=*/b));
    }
    tokens = apply_dropout(tokens, keeps);
  } else if (eval_keep_rate) {
    // Rate 1.0 keeps everything; validate and fall through.
    if (!(*eval_keep_rate > 0.0) || *eval_keep_rate > 1.0) {
      throw InvalidRate("eval keep rate outside (0, 1]");
    }
  }
  Tensor logits = forward(params, tokens);
  return ops::softmax(logits, -1);
}

}  // namespace vit

namespace {

void write_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ofstream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ofstream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

std::uint32_t read_u32(std::ifstream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw TruncatedFile("checkpoint ends unexpectedly");
  }
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t read_u64(std::ifstream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw TruncatedFile("checkpoint ends unexpectedly");
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double read_f64(std::ifstream& is) {
  const std::uint64_t bits = read_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const ViTParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open checkpoint for writing: " + path.string());
  os.write(kCheckpointMagic, 4);
  write_u32(os, kCheckpointVersion);
  const ModelConfig& c = params.config();
  for (std::size_t v : {c.depth, c.width, c.heads, c.patch, c.image_h,
                        c.image_w, c.classes, c.channels, c.mlp_ratio}) {
    write_u32(os, static_cast<std::uint32_t>(v));
  }
  write_u32(os, static_cast<std::uint32_t>(params.all().size()));
  for (const Param& p : params.all()) {
    write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(os, static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t e : p.tensor.shape()) write_u64(os, e);
    for (double v : p.tensor.values()) write_f64(os, v);
  }
  if (!os) throw Error("checkpoint write failed: " + path.string());
}

ViTParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw BadMagic("not a checkpoint file: " + path.string());
  }
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  c.depth = read_u32(is);
  c.width = read_u32(is);
  c.heads = read_u32(is);
  c.patch = read_u32(is);
  c.image_h = read_u32(is);
  c.image_w = read_u32(is);
  c.classes = read_u32(is);
  c.channels = read_u32(is);
  c.mlp_ratio = read_u32(is);

  ViTParams params = ViTParams::zeros(c);
  for (Param& p : params.all()) p.tensor.set_requires_grad(true);
  const std::uint32_t count = read_u32(is);
  if (count != params.all().size()) {
    throw Error("checkpoint parameter count mismatch");
  }
  for (Param& p : params.all()) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw TruncatedFile("checkpoint ends inside a parameter name");
    }
    if (name != p.name) {
      throw Error("checkpoint parameter order mismatch at '" + name + "'");
    }
    const std::uint32_t rank = read_u32(is);
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) shape[i] = read_u64(is);
    if (shape != p.tensor.shape()) {
      throw Error("checkpoint shape mismatch for '" + name + "'");
    }
    for (double& v : p.tensor.values_mut()) v = read_f64(is);
  }
  return params;
}

}  // namespace patchdrop
