#include "patchdrop/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "patchdrop/flops.hpp"
#include "patchdrop/ops.hpp"
#include "patchdrop/rng.hpp"

namespace patchdrop {

void TrainConfig::validate(const Dataset& data) const {
  model.validate();
  if (epochs == 0 || batch_size == 0) {
    throw Error("epochs and batch size must be positive");
  }
  if (warmup_epochs > epochs) {
    throw Error("warmup epochs exceed total epochs");
  }
  if (!(base_lr > 0.0)) throw Error("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw Error("momentum outside [0, 1)");
  }
  if (weight_decay < 0.0) throw Error("weight decay must be non-negative");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw Error("label smoothing outside [0, 1)");
  }
  if (sampling) {
    sampling->validate();
    if (sampling->grid_rows != model.grid_rows() ||
        sampling->grid_cols != model.grid_cols()) {
      throw Error("sampling grid does not match the model's patch grid");
    }
  }
  if (data.count() == 0 || data.train_split.empty()) {
    throw Error("training requires a non-empty train split");
  }
  if (data.height != model.image_h || data.width != model.image_w ||
      data.channels != model.channels) {
    throw ShapeMismatch("dataset geometry does not match the model");
  }
  if (data.classes != model.classes) {
    throw ShapeMismatch("dataset class count does not match the model");
  }
}

Tensor smoothed_cross_entropy(const Tensor& logits,
                              const std::vector<std::uint16_t>& labels,
                              double alpha) {
  if (logits.rank() != 2) {
    throw ShapeMismatch("cross entropy expects [B, K] logits");
  }
  if (alpha < 0.0 || alpha >= 1.0) {
    throw Error("label smoothing outside [0, 1)");
  }
  const std::size_t B = logits.extent(0), K = logits.extent(1);
  if (labels.size() != B) {
    throw ShapeMismatch("need one label per logit row");
  }
  for (std::uint16_t l : labels) {
    if (l >= K) throw LabelOutOfRange("label exceeds logit width");
  }

  const bool grad = active_tape() != nullptr && !flops::count_only() &&
                    logits.requires_grad();
  if (flops::count_only()) return Tensor::hollow({1});

  const double off = alpha / static_cast<double>(K);
  const double on = 1.0 - alpha + off;
  const double* pl = logits.values().data();
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = pl + b * K;
    double mx = row[0];
    for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(row[k] - mx);
    const double lse = mx + std::log(sum);
    // loss_b = lse - sum_k target_k * logit_k
    double dot = off * std::accumulate(row, row + K, 0.0);
    dot += (on - off) * row[labels[b]];
    total += lse - dot;
  }
  Tensor loss = Tensor::scalar(total / static_cast<double>(B));
  loss.set_requires_grad(grad);

  if (grad) {
    Tensor lv = logits, out = loss;
    std::vector<std::uint16_t> lab = labels;
    active_tape()->record("smoothed_cross_entropy",
                          [lv, out, lab, B, K, on, off]() mutable {
      const double g = out.grad()[0] / static_cast<double>(B);
      const double* pl = lv.values().data();
      double* pdl = lv.grad_mut().data();
      for (std::size_t b = 0; b < B; ++b) {
        const double* row = pl + b * K;
        double* drow = pdl + b * K;
        double mx = row[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) sum += std::exp(row[k] - mx);
        const double inv = 1.0 / sum;
        for (std::size_t k = 0; k < K; ++k) {
          const double p = std::exp(row[k] - mx) * inv;
          const double target = (k == lab[b]) ? on : off;
          drow[k] += (p - target) * g;
        }
      }
    });
  }
  return loss;
}

double smoothed_target_entropy(double alpha, std::size_t classes) {
  const double off = alpha / static_cast<double>(classes);
  const double on = 1.0 - alpha + off;
  double h = 0.0;
  if (on > 0.0) h -= on * std::log(on);
  if (off > 0.0) {
    h -= static_cast<double>(classes - 1) * off * std::log(off);
  }
  return h;
}

double lr_at(std::size_t step, const TrainConfig& config,
             std::size_t steps_per_epoch) {
  const std::size_t warmup = config.warmup_epochs * steps_per_epoch;
  if (warmup == 0 || step >= warmup) return config.base_lr;
  return config.base_lr * static_cast<double>(step + 1) /
         static_cast<double>(warmup);
}

namespace {

void augment_image(double* img, std::size_t C, std::size_t H, std::size_t W,
                   bool flip, bool crop_pad, Rng& rng) {
  if (flip && rng.next_double() < 0.5) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t y = 0; y < H; ++y) {
        double* row = img + (c * H + y) * W;
        std::reverse(row, row + W);
      }
    }
  }
  if (crop_pad) {
    constexpr std::size_t kPad = 4;
    const std::ptrdiff_t dy =
        static_cast<std::ptrdiff_t>(rng.next_below(2 * kPad + 1)) -
        static_cast<std::ptrdiff_t>(kPad);
    const std::ptrdiff_t dx =
        static_cast<std::ptrdiff_t>(rng.next_below(2 * kPad + 1)) -
        static_cast<std::ptrdiff_t>(kPad);
    if (dy != 0 || dx != 0) {
      std::vector<double> src(img, img + C * H * W);
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
          for (std::size_t x = 0; x < W; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) + dx;
            double v = 0.0;
            if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(H) && sx >= 0 &&
                sx < static_cast<std::ptrdiff_t>(W)) {
              v = src[(c * H + static_cast<std::size_t>(sy)) * W +
                      static_cast<std::size_t>(sx)];
            }
            img[(c * H + y) * W + x] = v;
          }
        }
      }
    }
  }
}

std::size_t argmax_row(const double* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

}  // namespace

std::pair<double, double> evaluate(const ViTParams& params,
                                   const Dataset& data,
                                   const std::vector<std::uint32_t>& indices,
                                   std::size_t batch_size,
                                   double label_smoothing,
                                   std::optional<double> eval_keep_rate,
                                   std::uint64_t eval_seed) {
  if (indices.empty()) return {0.0, 0.0};
  const ModelConfig& mc = params.config();
  double loss_sum = 0.0;
  std::size_t correct = 0;

  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t end = std::min(indices.size(), start + batch_size);
    std::vector<std::uint32_t> batch(indices.begin() + start,
                                     indices.begin() + end);
    ImageBatch images = ImageBatch::wrap(make_image_tensor(data, batch));
    TokenBatch tokens = vit::tokenize(params, images);
    if (eval_keep_rate && *eval_keep_rate < 1.0) {
      SamplingSpec spec =
          SamplingSpec::fixed(Strategy::kRandom, *eval_keep_rate, eval_seed,
                              mc.grid_rows(), mc.grid_cols());
      std::vector<KeepSet> keeps;
      keeps.reserve(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        // Keyed by the dataset index so the draw does not depend on
        // batching.
        keeps.push_back(draw_keep_set(spec, /*step=*/0, batch[b]));
      }
      tokens = apply_dropout(tokens, keeps);
    }
    Tensor logits = vit::forward(params, tokens);
    std::vector<std::uint16_t> labels(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      labels[b] = data.labels[batch[b]];
    }
    Tensor loss = smoothed_cross_entropy(logits, labels, label_smoothing);
    loss_sum += loss.item() * static_cast<double>(batch.size());
    const double* pl = logits.values().data();
    const std::size_t K = mc.classes;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      if (argmax_row(pl + b * K, K) == labels[b]) ++correct;
    }
  }
  const double n = static_cast<double>(indices.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

TrainResult train(const TrainConfig& config, const Dataset& data) {
  config.validate(data);
  const ModelConfig& mc = config.model;
  const std::size_t n_patches = mc.patch_count();
  const std::size_t steps_per_epoch =
      (data.train_split.size() + config.batch_size - 1) / config.batch_size;
  const double loss_floor =
      smoothed_target_entropy(config.label_smoothing, mc.classes);

  ViTParams params = ViTParams::init(mc, config.seed);
  std::vector<std::vector<double>> velocity;
  velocity.reserve(params.all().size());
  for (const Param& p : params.all()) {
    velocity.emplace_back(p.tensor.numel(), 0.0);
  }

  TrainLog log;
  ViTParams best = params.clone();
  std::size_t best_epoch = 0;
  double best_val = -1.0;
  std::size_t stale_epochs = 0;

  flops::reset();
  std::size_t step = 0;
  std::vector<std::uint32_t> order(data.train_split);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    // Deterministic epoch shuffle.
    Rng shuffle_rng = rng_at(config.seed, Stream::kShuffle, epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(shuffle_rng.next_below(i));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t epoch_correct = 0;
    double rate_sum = 0.0;
    std::size_t batches = 0;

    for (std::size_t start = 0; start < order.size();
         start += config.batch_size, ++step, ++batches) {
      const std::size_t end =
          std::min(order.size(), start + config.batch_size);
      std::vector<std::uint32_t> batch(order.begin() + start,
                                       order.begin() + end);
      const std::size_t B = batch.size();

      Tensor image_data = make_image_tensor(data, batch);
      if (config.flip || config.crop_pad) {
        double* px = image_data.values_mut().data();
        const std::size_t img = data.image_bytes();
        for (std::size_t b = 0; b < B; ++b) {
          Rng aug_rng = rng_at(config.seed, Stream::kAugment, step, b);
          augment_image(px + b * img, mc.channels, mc.image_h, mc.image_w,
                        config.flip, config.crop_pad, aug_rng);
        }
      }
      ImageBatch images = ImageBatch::wrap(std::move(image_data));

      double rate = 1.0;
      std::vector<KeepSet> keeps;
      if (config.sampling) {
        const SamplingSpec& spec = *config.sampling;
        rate = spec.rate_interval ? draw_rate(spec, step) : *spec.keep_rate;
        if (config.per_batch_keepset) {
          keeps.assign(B, draw_keep_set(spec, step, 0, rate));
        } else {
          keeps.reserve(B);
          for (std::size_t b = 0; b < B; ++b) {
            keeps.push_back(draw_keep_set(spec, step, b, rate));
          }
        }
      }
      rate_sum += rate;

      Tape tape;
      Tensor loss;
      Tensor logits;
      {
        TapeScope scope(tape);
        TokenBatch tokens = vit::tokenize(params, images);
        if (config.sampling) {
          tokens = apply_dropout(tokens, keeps);
          const std::size_t expect = kept_count(rate, n_patches) + 1;
          if (tokens.seq_len() != expect) {
            throw Error("sequence length diverged from the floor rule");
          }
        }
        logits = vit::forward(params, tokens);
        std::vector<std::uint16_t> labels(B);
        for (std::size_t b = 0; b < B; ++b) labels[b] = data.labels[batch[b]];
        loss = smoothed_cross_entropy(logits, labels, config.label_smoothing);
      }

      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw DivergedLoss("non-finite loss at epoch " +
                           std::to_string(epoch) + ", step " +
                           std::to_string(step));
      }
      if (loss_value < loss_floor - 1e-9) {
        throw Error("loss fell below the smoothed-target entropy bound");
      }

      tape.backward(loss);

      const double lr = lr_at(step, config, steps_per_epoch);
      for (std::size_t pi = 0; pi < params.all().size(); ++pi) {
        Param& p = params.all()[pi];
        auto theta = p.tensor.values_mut();
        auto g = p.tensor.grad();
        auto& v = velocity[pi];
        const bool decay = config.decay_all || p.decayable;
        const double wd = decay ? config.weight_decay : 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
          v[i] = config.momentum * v[i] + g[i] + wd * theta[i];
          theta[i] -= lr * v[i];
        }
      }
      params.zero_grads();

      epoch_loss += loss_value * static_cast<double>(B);
      const double* pl = logits.values().data();
      for (std::size_t b = 0; b < B; ++b) {
        if (argmax_row(pl + b * mc.classes, mc.classes) ==
            data.labels[batch[b]]) {
          ++epoch_correct;
        }
      }

      log.steps.push_back(StepRecord{step, rate,
                                     config.sampling
                                         ? kept_count(rate, n_patches) + 1
                                         : n_patches + 1,
                                     loss_value, lr});
    }

    if (!params.all_finite()) {
      throw DivergedLoss("parameters became non-finite in epoch " +
                         std::to_string(epoch));
    }

    auto [val_loss, val_top1] =
        evaluate(params, data, data.val_split, config.batch_size,
                 config.label_smoothing);

    EpochRecord er;
    er.epoch = epoch;
    er.train_loss =
        epoch_loss / static_cast<double>(data.train_split.size());
    er.train_top1 = static_cast<double>(epoch_correct) /
                    static_cast<double>(data.train_split.size());
    er.val_loss = val_loss;
    er.val_top1 = val_top1;
    er.cum_flops = flops::count();
    er.keep_rate_mean = rate_sum / static_cast<double>(batches);
    log.epochs.push_back(er);

    if (val_top1 > best_val) {
      best_val = val_top1;
      best_epoch = epoch;
      best = params.clone();
      stale_epochs = 0;
    } else {
      ++stale_epochs;
    }
    if (config.early_stop_patience > 0 &&
        stale_epochs >= config.early_stop_patience) {
      break;
    }
  }

  if (data.val_split.empty()) {
    best = params.clone();
    best_epoch = log.epochs.empty() ? 0 : log.epochs.back().epoch;
    best_val = 0.0;
  }

  log.best_epoch = best_epoch;
  log.best_val_top1 = best_val;
  log.total_flops = flops::count();

  TrainResult result{std::move(best), std::move(log)};
  return result;
}

void write_trainlog_csv(const std::filesystem::path& path,
                        const TrainLog& log) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open train log for writing: " + path.string());
  os << "epoch,split,loss,top1,cum_flops,keep_rate_mean\n";
  char buf[256];
  for (const EpochRecord& e : log.epochs) {
    std::snprintf(buf, sizeof(buf), "%zu,train,%.9g,%.9g,%llu,%.9g\n",
                  e.epoch, e.train_loss, e.train_top1,
                  static_cast<unsigned long long>(e.cum_flops),
                  e.keep_rate_mean);
    os << buf;
    std::snprintf(buf, sizeof(buf), "%zu,val,%.9g,%.9g,%llu,1\n", e.epoch,
                  e.val_loss, e.val_top1,
                  static_cast<unsigned long long>(e.cum_flops));
    os << buf;
  }
}

}  // namespace patchdrop
