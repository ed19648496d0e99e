#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "patchdrop/tensor.hpp"

namespace patchdrop {

/// In-memory image classification dataset. Pixels stay as raw bytes until a
/// batch is assembled; [0, 255] maps to [0.0, 1.0].
struct Dataset {
  std::size_t height = 0, width = 0, channels = 0, classes = 0;
  std::vector<std::uint8_t> pixels;  // count * C * H * W, channel-planar
  std::vector<std::uint16_t> labels;
  std::vector<std::uint32_t> train_split, val_split, test_split;

  std::size_t count() const { return labels.size(); }
  std::size_t image_bytes() const { return channels * height * width; }
  const std::uint8_t* image(std::size_t i) const {
    return pixels.data() + i * image_bytes();
  }

  /// Checks index ranges and pairwise disjointness of the splits.
  void validate_splits() const;
};

// TID container: magic "TID1", u32 image count, u16 H, u16 W, u8 C, u16 K,
// then per image H*W*C pixel bytes (channel plane by channel plane) and a
// u16 label. Little-endian throughout.
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const Dataset& data);

// Split container: u32 train/val/test counts followed by the three u32
// index arrays.
void load_splits(const std::filesystem::path& path, Dataset& data);
void save_splits(const std::filesystem::path& path, const Dataset& data);

/// Assembles images[indices] into a [B, C, H, W] tensor scaled to [0, 1].
Tensor make_image_tensor(const Dataset& data,
                         const std::vector<std::uint32_t>& indices);

}  // namespace patchdrop
