#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "patchdrop/manifest.hpp"
#include "patchdrop/trainer.hpp"

namespace patchdrop::experiments {

enum class Axis {
  kKeepRate,
  kImageSize,
  kPatchSize,
  kVariant,
  kDepth,
  kStrategy
};

std::string axis_name(Axis axis);
Axis axis_from_name(const std::string& name);

/// One experiment grid: a base configuration swept along one axis, each
/// value trained once per seed.
struct SweepPlan {
  TrainConfig base;
  Axis axis = Axis::kKeepRate;
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds;

  void validate() const;
};

struct CellOutcome {
  std::string cell_id;
  std::string value;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double test_loss = 0.0;
  double test_top1 = 0.0;
  std::uint64_t train_flops = 0;
  double keep_rate = 1.0;
  std::size_t kept_patches = 0;
  std::size_t tokens_per_step = 0;
};

struct SweepResult {
  std::vector<CellOutcome> cells;
  std::filesystem::path summary_path;
};

/// Trains every (value, seed) cell, evaluates on the test split with all
/// tokens, and writes runs/<cell-id>/{manifest.json, trainlog.csv,
/// checkpoint.pdvt, metrics.csv} plus a top-level summary.csv. Failed cells
/// are recorded in place, never dropped. Budget axes (image size, patch
/// size, depth) rescale the keep rate via the cost model to match the base
/// cell's empirical FLOPs.
SweepResult run_sweep(const SweepPlan& plan, const Dataset& data,
                      const std::filesystem::path& out_dir);

struct RobustnessMatrix {
  std::vector<double> train_rates;
  std::vector<double> eval_rates;
  std::vector<std::vector<double>> accuracy;  // [train][eval]
};

/// Trains one model per train rate (1.0 = baseline) and evaluates each at
/// every eval rate with per-image random keep sets. Writes the full matrix
/// and the three named curves (trained-with-dropout at the same rate,
/// full-trained at reduced rates, dropout-trained at full evaluation).
RobustnessMatrix run_robustness(const std::vector<double>& train_rates,
                                const std::vector<double>& eval_rates,
                                const TrainConfig& base, const Dataset& data,
                                const std::filesystem::path& out_dir);

struct EnsembleResult {
  std::vector<double> per_model_top1;
  double ensemble_top1 = 0.0;
  std::uint64_t total_train_flops = 0;
};

/// Trains n models at the given keep rate with distinct seeds and averages
/// their softmax probabilities on the test split.
EnsembleResult run_ensemble(std::size_t n_models, double keep_rate,
                            const TrainConfig& base, const Dataset& data,
                            const std::filesystem::path& out_dir);

struct StrategyOutcome {
  std::string strategy;
  std::uint64_t seed = 0;
  double test_top1 = 0.0;
};

struct StrategyResult {
  std::vector<StrategyOutcome> rows;
  std::map<std::string, double> mean_top1;
};

/// One run per strategy per seed at a fixed keep rate.
StrategyResult run_strategy_compare(const std::vector<std::string>& strategies,
                                    double keep_rate,
                                    const std::vector<std::uint64_t>& seeds,
                                    const TrainConfig& base,
                                    const Dataset& data,
                                    const std::filesystem::path& out_dir);

/// Key=value view of a training configuration for manifests and hashing.
std::map<std::string, std::string> train_config_kv(const TrainConfig& config);

/// Integer-factor nearest-neighbour upscale (the desk-scale stand-in for
/// offline resizing in the data pipeline).
Dataset upscale_nearest(const Dataset& data, std::size_t factor);

}  // namespace patchdrop::experiments
