#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "patchdrop/tensor.hpp"

namespace patchdrop {

/// A batch of images as a [B, C, H, W] tensor with values in [0, 1].
struct ImageBatch {
  Tensor data;
  std::size_t batch = 0, channels = 0, height = 0, width = 0;

  static ImageBatch wrap(Tensor t);
};

/// Embedded token sequences plus the grid geometry they came from.
///
/// kept_indices, when present, lists the original patch indices (row-major
/// over the grid) that survived dropout, sorted ascending per list; absent
/// means all patches are present. One list means the batch shares a draw;
/// otherwise there is one list per sample.
struct TokenBatch {
  Tensor tokens;  // [B, T, d]
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  bool has_cls = false;
  std::optional<std::vector<std::vector<std::size_t>>> kept_indices;

  std::size_t patch_count() const { return grid_rows * grid_cols; }
  std::size_t seq_len() const { return tokens.extent(1); }
  bool dropped() const { return kept_indices.has_value(); }
  /// Kept patch indices for batch element b (valid after dropout).
  const std::vector<std::size_t>& kept_for(std::size_t b) const;
};

/// Tiles images into non-overlapping P x P blocks: [B, N, P*P*C] with
/// N = (H/P) * (W/P), patches ordered row-major over the grid and each row
/// holding the block's pixels channel-plane by channel-plane.
Tensor patchify(const ImageBatch& images, std::size_t patch);

/// Exact inverse of patchify.
ImageBatch unpatchify(const Tensor& patches, std::size_t patch,
                      std::size_t channels, std::size_t height,
                      std::size_t width);

/// Projects patches to d dimensions, adds positional embeddings and prepends
/// the CLS token. Token 0 is cls + pos[0]; token j+1 is patch_j * proj +
/// pos[j+1]. Runs before any dropout draw so position information stays
/// attached to each patch.
TokenBatch embed_tokens(const Tensor& patches, const Tensor& proj,
                        const Tensor& pos, const Tensor& cls,
                        std::size_t grid_rows, std::size_t grid_cols);

}  // namespace patchdrop
