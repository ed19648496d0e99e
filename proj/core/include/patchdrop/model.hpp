#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "patchdrop/sampler.hpp"
#include "patchdrop/tensor.hpp"
#include "patchdrop/tokenizer.hpp"

namespace patchdrop {

/// Hyperparameters of one classifier. Width must divide evenly across heads
/// and the image extents across the patch size.
struct ModelConfig {
  std::size_t depth = 12;
  std::size_t width = 768;
  std::size_t heads = 12;
  std::size_t patch = 16;
  std::size_t image_h = 224;
  std::size_t image_w = 224;
  std::size_t classes = 1000;
  std::size_t channels = 3;
  std::size_t mlp_ratio = 4;

  std::size_t grid_rows() const { return image_h / patch; }
  std::size_t grid_cols() const { return image_w / patch; }
  std::size_t patch_count() const { return grid_rows() * grid_cols(); }
  std::size_t patch_dim() const { return patch * patch * channels; }
  std::size_t head_dim() const { return width / heads; }
  std::size_t hidden() const { return width * mlp_ratio; }

  void validate() const;

  /// Standard variant dimensions: tiny (192/3/12), small (384/6/12),
  /// base (768/12/12), large (1024/16/24). Patch, image, classes and
  /// channels are left for the caller.
  static ModelConfig variant(const std::string& name);
};

/// One named parameter tensor. decayable marks tensors that weight decay may
/// skip when the trainer is configured to exempt norms, biases and tokens.
struct Param {
  std::string name;
  Tensor tensor;
  bool decayable = true;
};

/// All learned state of the classifier. Parameter order is fixed and is the
/// serialization order.
class ViTParams {
 public:
  /// Random initialization: truncated normal (0, 0.02) for projections and
  /// the positional table, ones for norm gains, zeros for biases and CLS.
  static ViTParams init(const ModelConfig& config, std::uint64_t seed);
  /// Shape-only parameters for counting runs under flops::CountOnlyScope.
  static ViTParams hollow(const ModelConfig& config);
  /// All-zero parameters (checkpoint loading buffer).
  static ViTParams zeros(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }

  std::size_t parameter_count() const;
  void zero_grads();
  bool all_finite() const;
  ViTParams clone() const;

  // Convenience accessors used by the forward pass.
  const Tensor& patch_proj() const { return at("patch_proj").tensor; }
  const Tensor& pos() const { return at("pos").tensor; }
  const Tensor& cls() const { return at("cls").tensor; }

 private:
  ModelConfig config_;
  std::vector<Param> params_;

  static ViTParams build(const ModelConfig& config,
                         const std::function<Tensor(Shape, const char*)>& make);
};

std::size_t parameter_count(const ModelConfig& config);

namespace vit {

/// Embeds a raw image batch: patchify, project, add positions, prepend CLS.
TokenBatch tokenize(const ViTParams& params, const ImageBatch& images);

/// Scaled dot-product attention over `heads` heads with per-head scale
/// 1/sqrt(d/heads), including the QKV and output projections of `block`.
Tensor attention(const Tensor& x, const ViTParams& params, std::size_t block);

/// Pre-norm transformer stack over any sequence length, classification head
/// on the final CLS embedding. Returns logits [B, K].
Tensor forward(const ViTParams& params, const TokenBatch& tokens);

/// Class probabilities. Default keeps every token; a keep rate below 1 draws
/// one random keep set per image, deterministic in (seed, image index).
Tensor predict(const ViTParams& params, const ImageBatch& images,
               std::optional<double> eval_keep_rate = std::nullopt,
               std::uint64_t seed = 0);

}  // namespace vit

/// Binary checkpoint: magic "PDVT", format version, config, then parameter
/// tensors as (name length, name, rank, extents, little-endian f64 data).
/// Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path,
                     const ViTParams& params);
ViTParams load_checkpoint(const std::filesystem::path& path);

}  // namespace patchdrop
