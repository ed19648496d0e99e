#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "patchdrop/tokenizer.hpp"

namespace patchdrop {

enum class Strategy { kRandom, kUniform, kStructured, kCropping };

/// Stable strategy names used by config files and CLI flags.
std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

/// Everything that governs one dropout draw. Exactly one of keep_rate /
/// rate_interval is active; the interval form resamples a rate per step.
struct SamplingSpec {
  Strategy strategy = Strategy::kRandom;
  std::optional<double> keep_rate;
  std::optional<std::pair<double, double>> rate_interval;
  std::uint64_t seed = 0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;

  static SamplingSpec fixed(Strategy s, double rate, std::uint64_t seed,
                            std::size_t grid_rows, std::size_t grid_cols);
  static SamplingSpec interval(Strategy s, double lo, double hi,
                               std::uint64_t seed, std::size_t grid_rows,
                               std::size_t grid_cols);
  void validate() const;
};

/// Sorted unique patch indices kept for one draw.
struct KeepSet {
  std::vector<std::size_t> indices;
  double effective_rate = 0.0;

  std::size_t size() const { return indices.size(); }
};

/// Kept-patch count under the floor rule: max(1, floor(rate * N)).
std::size_t kept_count(double rate, std::size_t n_patches);

/// Draws the keep set for (spec, step, sample). Deterministic in its
/// arguments; different samples within a batch get independent draws.
/// When the spec carries a rate interval the per-step rate must be drawn
/// first (draw_rate) and passed via rate_override.
KeepSet draw_keep_set(const SamplingSpec& spec, std::uint64_t step,
                      std::uint64_t sample = 0,
                      std::optional<double> rate_override = std::nullopt);

/// Per-step keep rate, uniform over the spec interval, deterministic in
/// (seed, step).
double draw_rate(const SamplingSpec& spec, std::uint64_t step);

/// Keeps CLS plus the selected patch rows (ascending original order) and
/// records the kept indices. Rejects a second application.
TokenBatch apply_dropout(const TokenBatch& tokens, const KeepSet& keep);

/// Per-sample variant; all keep sets must have the same size.
TokenBatch apply_dropout(const TokenBatch& tokens,
                         const std::vector<KeepSet>& keeps);

}  // namespace patchdrop
