#pragma once

#include <cstdint>

#include "patchdrop/dataset.hpp"

namespace patchdrop::synth {

/// Seeded 4-class texture benchmark: horizontal, vertical and diagonal
/// gratings plus a plaid pattern, with per-image frequency, phase, contrast
/// and pixel noise. Textures are spatially stationary, so class evidence is
/// spread over many patches. Splits are assigned contiguously with labels
/// cycling, which keeps every split balanced.
Dataset texture_benchmark(std::size_t train, std::size_t val, std::size_t test,
                          std::size_t image_size, std::uint64_t seed);

/// Linearly separable 2-class set (bright left half vs bright right half).
Dataset separable_pair(std::size_t train, std::size_t val, std::size_t test,
                       std::size_t image_size, std::uint64_t seed);

}  // namespace patchdrop::synth
