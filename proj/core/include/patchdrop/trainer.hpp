#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "patchdrop/dataset.hpp"
#include "patchdrop/model.hpp"
#include "patchdrop/sampler.hpp"

namespace patchdrop {

/// Supervised training configuration. `sampling` absent selects the plain
/// pipeline with no dropout machinery at all; a spec with keep rate 1.0
/// goes through the sampler and produces bitwise identical trajectories.
struct TrainConfig {
  ModelConfig model;
  std::optional<SamplingSpec> sampling;
  bool per_batch_keepset = false;  // one draw per step instead of per sample

  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double base_lr = 0.05;
  std::size_t warmup_epochs = 2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double label_smoothing = 0.1;
  std::uint64_t seed = 1;
  std::size_t early_stop_patience = 0;  // 0 disables early stopping
  bool flip = true;
  bool crop_pad = true;
  // Weight decay normally touches every parameter; switching this off
  // exempts norms, biases, CLS and the positional table.
  bool decay_all = true;

  void validate(const Dataset& data) const;
};

struct StepRecord {
  std::size_t step = 0;
  double keep_rate = 1.0;
  std::size_t seq_len = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_top1 = 0.0;
  double val_loss = 0.0;
  double val_top1 = 0.0;
  std::uint64_t cum_flops = 0;
  double keep_rate_mean = 1.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_top1 = 0.0;
  std::uint64_t total_flops = 0;
};

struct TrainResult {
  ViTParams params;  // best-validation snapshot
  TrainLog log;
};

/// Mean label-smoothed cross entropy of logits [B, K] against integer
/// labels; targets are (1 - alpha) * onehot + alpha / K.
Tensor smoothed_cross_entropy(const Tensor& logits,
                              const std::vector<std::uint16_t>& labels,
                              double alpha);

/// Entropy of the smoothed target distribution; the loss can never drop
/// below this.
double smoothed_target_entropy(double alpha, std::size_t classes);

/// Linear warmup to base_lr over the first warmup_epochs, then constant.
double lr_at(std::size_t step, const TrainConfig& config,
             std::size_t steps_per_epoch);

/// Mean loss and top-1 accuracy over `indices`, all tokens retained.
std::pair<double, double> evaluate(const ViTParams& params,
                                   const Dataset& data,
                                   const std::vector<std::uint32_t>& indices,
                                   std::size_t batch_size,
                                   double label_smoothing,
                                   std::optional<double> eval_keep_rate =
                                       std::nullopt,
                                   std::uint64_t eval_seed = 0);

/// Full training loop: per step draws the keep rate (point or interval),
/// draws keep sets, embeds then drops, and applies SGD with momentum,
/// weight decay, label smoothing and linear warmup. Early-stops on
/// validation top-1 when a patience is configured. Deterministic in the
/// config, including the seed.
TrainResult train(const TrainConfig& config, const Dataset& data);

/// Per-epoch CSV rows: epoch, split, loss, top1, cum_flops, keep_rate_mean.
void write_trainlog_csv(const std::filesystem::path& path,
                        const TrainLog& log);

}  // namespace patchdrop
