#include "patchdrop/experiments.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "patchdrop/cost.hpp"

namespace patchdrop::experiments {

namespace {

namespace fs = std::filesystem;

/// Keep rate such that kept_count(rate, n) == k exactly.
double rate_for_kept(std::size_t k, std::size_t n) {
  return static_cast<double>(k) / static_cast<double>(n);
}

/// Smallest-error kept count whose empirical FLOPs match `target`.
std::size_t match_budget(const ModelConfig& config, std::uint64_t target) {
  const std::size_t n = config.patch_count();
  std::size_t best_k = n;
  std::uint64_t best_err = ~0ULL;
  for (std::size_t k = 1; k <= n; ++k) {
    const std::uint64_t f = cost::empirical_flops(config, k);
    const std::uint64_t err = f > target ? f - target : target - f;
    if (err < best_err) {
      best_err = err;
      best_k = k;
    }
    if (f > target) break;  // strictly increasing in k
  }
  return best_k;
}

std::uint64_t base_budget(const TrainConfig& base) {
  const double rate =
      base.sampling && base.sampling->keep_rate ? *base.sampling->keep_rate
                                                : 1.0;
  const std::size_t k = kept_count(rate, base.model.patch_count());
  return cost::empirical_flops(base.model, k);
}

void set_rate(TrainConfig& cfg, double rate) {
  cfg.sampling = SamplingSpec::fixed(
      cfg.sampling ? cfg.sampling->strategy : Strategy::kRandom, rate,
      cfg.sampling ? cfg.sampling->seed : cfg.seed, cfg.model.grid_rows(),
      cfg.model.grid_cols());
}

struct DerivedCell {
  TrainConfig config;
  std::size_t upscale_factor = 1;
};

DerivedCell derive_cell(const SweepPlan& plan, const Dataset& data,
                        const std::string& value, std::uint64_t seed) {
  DerivedCell cell;
  cell.config = plan.base;
  cell.config.seed = seed;
  if (cell.config.sampling) cell.config.sampling->seed = seed;

  switch (plan.axis) {
    case Axis::kKeepRate: {
      set_rate(cell.config, std::stod(value));
      break;
    }
    case Axis::kImageSize: {
      const std::size_t target = std::stoul(value);
      if (target % data.height != 0 || target < data.height) {
        throw Error("image size " + value +
                    " is not an integer multiple of the dataset's " +
                    std::to_string(data.height));
      }
      const std::uint64_t budget = base_budget(plan.base);
      cell.upscale_factor = target / data.height;
      cell.config.model.image_h = target;
      cell.config.model.image_w = target;
      cell.config.model.validate();
      const std::size_t k = match_budget(cell.config.model, budget);
      set_rate(cell.config, rate_for_kept(k, cell.config.model.patch_count()));
      break;
    }
    case Axis::kPatchSize: {
      const std::uint64_t budget = base_budget(plan.base);
      cell.config.model.patch = std::stoul(value);
      cell.config.model.validate();
      const std::size_t k = match_budget(cell.config.model, budget);
      set_rate(cell.config, rate_for_kept(k, cell.config.model.patch_count()));
      break;
    }
    case Axis::kVariant: {
      // Grid geometry is untouched, so the base sampling spec stays valid.
      ModelConfig v = ModelConfig::variant(value);
      cell.config.model.depth = v.depth;
      cell.config.model.width = v.width;
      cell.config.model.heads = v.heads;
      cell.config.model.validate();
      break;
    }
    case Axis::kDepth: {
      const std::uint64_t budget = base_budget(plan.base);
      cell.config.model.depth = std::stoul(value);
      cell.config.model.validate();
      const std::size_t k = match_budget(cell.config.model, budget);
      set_rate(cell.config, rate_for_kept(k, cell.config.model.patch_count()));
      break;
    }
    case Axis::kStrategy: {
      if (!cell.config.sampling) {
        throw Error("strategy axis requires a sampling spec in the base");
      }
      cell.config.sampling->strategy = strategy_from_name(value);
      break;
    }
  }
  if (cell.config.sampling) cell.config.sampling->validate();
  return cell;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') {
      c = '_';
    }
  }
  return s;
}

void write_metrics_csv(const fs::path& path, std::uint64_t hash,
                       const CellOutcome& c) {
  std::ofstream os(path, std::ios::binary);
  os << "# config_hash=" << hash_hex(hash) << "\n";
  os << "value,seed,failed,test_loss,test_top1,train_flops,keep_rate,kept,"
        "tokens\n";
  os << c.value << ',' << c.seed << ',' << (c.failed ? 1 : 0) << ','
     << format_double(c.test_loss) << ',' << format_double(c.test_top1) << ','
     << c.train_flops << ',' << format_double(c.keep_rate) << ','
     << c.kept_patches << ',' << c.tokens_per_step << "\n";
}

/// Numeric-aware ascending order for axis values.
bool value_less(const std::string& a, const std::string& b) {
  char* enda = nullptr;
  char* endb = nullptr;
  const double da = std::strtod(a.c_str(), &enda);
  const double db = std::strtod(b.c_str(), &endb);
  const bool na = enda && *enda == '\0';
  const bool nb = endb && *endb == '\0';
  if (na && nb) return da < db;
  return a < b;
}

}  // namespace

std::string axis_name(Axis axis) {
  switch (axis) {
    case Axis::kKeepRate: return "keep_rate";
    case Axis::kImageSize: return "image_size";
    case Axis::kPatchSize: return "patch_size";
    case Axis::kVariant: return "variant";
    case Axis::kDepth: return "depth";
    case Axis::kStrategy: return "strategy";
  }
  throw Error("unknown axis");
}

Axis axis_from_name(const std::string& name) {
  if (name == "keep_rate") return Axis::kKeepRate;
  if (name == "image_size") return Axis::kImageSize;
  if (name == "patch_size") return Axis::kPatchSize;
  if (name == "variant") return Axis::kVariant;
  if (name == "depth") return Axis::kDepth;
  if (name == "strategy") return Axis::kStrategy;
  throw Error("unknown sweep axis '" + name + "'");
}

void SweepPlan::validate() const {
  if (values.empty()) throw Error("sweep values must be non-empty");
  if (seeds.empty()) throw Error("sweep needs at least one seed");
}

std::map<std::string, std::string> train_config_kv(const TrainConfig& c) {
  std::map<std::string, std::string> kv;
  kv["model.depth"] = std::to_string(c.model.depth);
  kv["model.width"] = std::to_string(c.model.width);
  kv["model.heads"] = std::to_string(c.model.heads);
  kv["model.patch"] = std::to_string(c.model.patch);
  kv["model.image_h"] = std::to_string(c.model.image_h);
  kv["model.image_w"] = std::to_string(c.model.image_w);
  kv["model.classes"] = std::to_string(c.model.classes);
  kv["model.channels"] = std::to_string(c.model.channels);
  kv["model.mlp_ratio"] = std::to_string(c.model.mlp_ratio);
  if (c.sampling) {
    kv["sampling.strategy"] = strategy_name(c.sampling->strategy);
    if (c.sampling->keep_rate) {
      kv["sampling.keep_rate"] = format_double(*c.sampling->keep_rate);
    }
    if (c.sampling->rate_interval) {
      kv["sampling.rate_lo"] = format_double(c.sampling->rate_interval->first);
      kv["sampling.rate_hi"] =
          format_double(c.sampling->rate_interval->second);
    }
    kv["sampling.seed"] = std::to_string(c.sampling->seed);
  } else {
    kv["sampling"] = "none";
  }
  kv["per_batch_keepset"] = c.per_batch_keepset ? "1" : "0";
  kv["epochs"] = std::to_string(c.epochs);
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["base_lr"] = format_double(c.base_lr);
  kv["warmup_epochs"] = std::to_string(c.warmup_epochs);
  kv["momentum"] = format_double(c.momentum);
  kv["weight_decay"] = format_double(c.weight_decay);
  kv["label_smoothing"] = format_double(c.label_smoothing);
  kv["seed"] = std::to_string(c.seed);
  kv["early_stop_patience"] = std::to_string(c.early_stop_patience);
  kv["flip"] = c.flip ? "1" : "0";
  kv["crop_pad"] = c.crop_pad ? "1" : "0";
  kv["decay_all"] = c.decay_all ? "1" : "0";
  return kv;
}

Dataset upscale_nearest(const Dataset& data, std::size_t factor) {
  if (factor == 0) throw Error("upscale factor must be positive");
  if (factor == 1) return data;
  Dataset out;
  out.height = data.height * factor;
  out.width = data.width * factor;
  out.channels = data.channels;
  out.classes = data.classes;
  out.labels = data.labels;
  out.train_split = data.train_split;
  out.val_split = data.val_split;
  out.test_split = data.test_split;
  out.pixels.resize(data.count() * out.image_bytes());
  for (std::size_t i = 0; i < data.count(); ++i) {
    const std::uint8_t* src = data.image(i);
    std::uint8_t* dst = out.pixels.data() + i * out.image_bytes();
    for (std::size_t c = 0; c < data.channels; ++c) {
      for (std::size_t y = 0; y < out.height; ++y) {
        for (std::size_t x = 0; x < out.width; ++x) {
          dst[(c * out.height + y) * out.width + x] =
              src[(c * data.height + y / factor) * data.width + x / factor];
        }
      }
    }
  }
  return out;
}

SweepResult run_sweep(const SweepPlan& plan, const Dataset& data,
                      const fs::path& out_dir) {
  plan.validate();
  fs::create_directories(out_dir);

  std::vector<std::string> values = plan.values;
  std::sort(values.begin(), values.end(), value_less);

  SweepResult result;
  for (const std::string& value : values) {
    for (std::uint64_t seed : plan.seeds) {
      CellOutcome cell;
      cell.value = value;
      cell.seed = seed;
      cell.cell_id = axis_name(plan.axis) + "=" + sanitize(value) +
                     "__seed=" + std::to_string(seed);
      const fs::path cell_dir = out_dir / cell.cell_id;
      fs::create_directories(cell_dir);
      try {
        DerivedCell derived = derive_cell(plan, data, value, seed);
        const Dataset* run_data = &data;
        Dataset upscaled;
        if (derived.upscale_factor > 1) {
          upscaled = upscale_nearest(data, derived.upscale_factor);
          run_data = &upscaled;
        }

        auto kv = train_config_kv(derived.config);
        kv["sweep.axis"] = axis_name(plan.axis);
        kv["sweep.value"] = value;
        RunManifest manifest = make_manifest("sweep-cell", kv);
        write_manifest(cell_dir / "manifest.json", manifest);

        TrainResult run = train(derived.config, *run_data);
        write_trainlog_csv(cell_dir / "trainlog.csv", run.log);
        save_checkpoint(cell_dir / "checkpoint.pdvt", run.params);

        auto [test_loss, test_top1] =
            evaluate(run.params, *run_data, run_data->test_split,
                     derived.config.batch_size,
                     derived.config.label_smoothing);
        cell.test_loss = test_loss;
        cell.test_top1 = test_top1;
        cell.train_flops = run.log.total_flops;
        if (derived.config.sampling &&
            derived.config.sampling->keep_rate) {
          cell.keep_rate = *derived.config.sampling->keep_rate;
        }
        cell.kept_patches =
            kept_count(cell.keep_rate, derived.config.model.patch_count());
        cell.tokens_per_step = cell.kept_patches + 1;
        write_metrics_csv(cell_dir / "metrics.csv", manifest.config_hash,
                          cell);
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
      }
      result.cells.push_back(std::move(cell));
    }
  }

  // Plan-level hash covers the base config and the grid.
  auto plan_kv = train_config_kv(plan.base);
  plan_kv["sweep.axis"] = axis_name(plan.axis);
  for (std::size_t i = 0; i < values.size(); ++i) {
    plan_kv["sweep.value." + std::to_string(i)] = values[i];
  }
  for (std::size_t i = 0; i < plan.seeds.size(); ++i) {
    plan_kv["sweep.seed." + std::to_string(i)] = std::to_string(plan.seeds[i]);
  }
  const std::uint64_t plan_hash = config_hash("sweep", plan_kv);

  result.summary_path = out_dir / "summary.csv";
  std::ofstream os(result.summary_path, std::ios::binary);
  os << "# config_hash=" << hash_hex(plan_hash) << "\n";
  os << "axis,value,seed,failed,error,keep_rate,kept,tokens,test_loss,"
        "test_top1,train_flops,top1_mean,top1_sd\n";
  for (const std::string& value : values) {
    // Aggregate over seeds for this value.
    double mean = 0.0, sd = 0.0;
    std::size_t ok = 0;
    for (const CellOutcome& c : result.cells) {
      if (c.value == value && !c.failed) {
        mean += c.test_top1;
        ++ok;
      }
    }
    if (ok > 0) mean /= static_cast<double>(ok);
    for (const CellOutcome& c : result.cells) {
      if (c.value == value && !c.failed) {
        sd += (c.test_top1 - mean) * (c.test_top1 - mean);
      }
    }
    sd = ok > 1 ? std::sqrt(sd / static_cast<double>(ok - 1)) : 0.0;
    for (const CellOutcome& c : result.cells) {
      if (c.value != value) continue;
      os << axis_name(plan.axis) << ',' << c.value << ',' << c.seed << ','
         << (c.failed ? 1 : 0) << ',' << (c.failed ? sanitize(c.error) : "")
         << ',' << format_double(c.keep_rate) << ',' << c.kept_patches << ','
         << c.tokens_per_step << ',' << format_double(c.test_loss) << ','
         << format_double(c.test_top1) << ',' << c.train_flops << ','
         << format_double(mean) << ',' << format_double(sd) << "\n";
    }
  }
  return result;
}

RobustnessMatrix run_robustness(const std::vector<double>& train_rates,
                                const std::vector<double>& eval_rates,
                                const TrainConfig& base, const Dataset& data,
                                const fs::path& out_dir) {
  fs::create_directories(out_dir);
  RobustnessMatrix m;
  m.train_rates = train_rates;
  m.eval_rates = eval_rates;

  auto kv = train_config_kv(base);
  for (std::size_t i = 0; i < train_rates.size(); ++i) {
    kv["robustness.train_rate." + std::to_string(i)] =
        format_double(train_rates[i]);
  }
  for (std::size_t i = 0; i < eval_rates.size(); ++i) {
    kv["robustness.eval_rate." + std::to_string(i)] =
        format_double(eval_rates[i]);
  }
  RunManifest manifest = make_manifest("robustness", kv);
  write_manifest(out_dir / "manifest.json", manifest);

  for (double tr : train_rates) {
    TrainConfig cfg = base;
    set_rate(cfg, tr);
    TrainResult run = train(cfg, data);
    std::vector<double> row;
    row.reserve(eval_rates.size());
    for (double er : eval_rates) {
      auto [loss, top1] = evaluate(run.params, data, data.test_split,
                                   cfg.batch_size, cfg.label_smoothing,
                                   er < 1.0 ? std::optional<double>(er)
                                            : std::nullopt,
                                   /*eval_seed=*/base.seed);
      (void)loss;
      row.push_back(top1);
    }
    m.accuracy.push_back(std::move(row));
  }

  std::ofstream os(out_dir / "matrix.csv", std::ios::binary);
  os << "# config_hash=" << hash_hex(manifest.config_hash) << "\n";
  os << "train_rate,eval_rate,top1\n";
  for (std::size_t i = 0; i < train_rates.size(); ++i) {
    for (std::size_t j = 0; j < eval_rates.size(); ++j) {
      os << format_double(train_rates[i]) << ','
         << format_double(eval_rates[j]) << ','
         << format_double(m.accuracy[i][j]) << "\n";
    }
  }

  // The three named curves, indexed by eval rate. green: trained with
  // dropout at that rate, evaluated at the same rate. blue: trained full,
  // evaluated reduced. purple: trained with dropout, evaluated full.
  const auto rate_index = [&](double r) {
    for (std::size_t i = 0; i < train_rates.size(); ++i) {
      if (train_rates[i] == r) return static_cast<std::ptrdiff_t>(i);
    }
    return static_cast<std::ptrdiff_t>(-1);
  };
  const std::ptrdiff_t full_row = rate_index(1.0);
  const auto eval_index = [&](double r) {
    for (std::size_t j = 0; j < eval_rates.size(); ++j) {
      if (eval_rates[j] == r) return static_cast<std::ptrdiff_t>(j);
    }
    return static_cast<std::ptrdiff_t>(-1);
  };
  const std::ptrdiff_t full_eval = eval_index(1.0);

  std::ofstream cs(out_dir / "curves.csv", std::ios::binary);
  cs << "# config_hash=" << hash_hex(manifest.config_hash) << "\n";
  cs << "eval_rate,green,blue,purple\n";
  for (std::size_t j = 0; j < eval_rates.size(); ++j) {
    const double er = eval_rates[j];
    const std::ptrdiff_t ti = rate_index(er);
    const double green =
        ti >= 0 ? m.accuracy[static_cast<std::size_t>(ti)][j] : std::nan("");
    const double blue =
        full_row >= 0 ? m.accuracy[static_cast<std::size_t>(full_row)][j]
                      : std::nan("");
    const double purple =
        (ti >= 0 && full_eval >= 0)
            ? m.accuracy[static_cast<std::size_t>(ti)]
                        [static_cast<std::size_t>(full_eval)]
            : std::nan("");
    cs << format_double(er) << ',' << format_double(green) << ','
       << format_double(blue) << ',' << format_double(purple) << "\n";
  }
  return m;
}

EnsembleResult run_ensemble(std::size_t n_models, double keep_rate,
                            const TrainConfig& base, const Dataset& data,
                            const fs::path& out_dir) {
  if (n_models == 0) throw Error("ensemble needs at least one model");
  fs::create_directories(out_dir);

  auto kv = train_config_kv(base);
  kv["ensemble.models"] = std::to_string(n_models);
  kv["ensemble.keep_rate"] = format_double(keep_rate);
  RunManifest manifest = make_manifest("ensemble", kv);
  write_manifest(out_dir / "manifest.json", manifest);

  EnsembleResult result;
  const std::size_t n_test = data.test_split.size();
  std::vector<double> prob_sum(n_test * data.classes, 0.0);

  for (std::size_t mi = 0; mi < n_models; ++mi) {
    TrainConfig cfg = base;
    cfg.seed = base.seed + mi;
    set_rate(cfg, keep_rate);
    cfg.sampling->seed = cfg.seed;
    TrainResult run = train(cfg, data);
    result.total_train_flops += run.log.total_flops;

    std::size_t correct = 0;
    for (std::size_t start = 0; start < n_test; start += cfg.batch_size) {
      const std::size_t end = std::min(n_test, start + cfg.batch_size);
      std::vector<std::uint32_t> batch(data.test_split.begin() + start,
                                       data.test_split.begin() + end);
      ImageBatch images = ImageBatch::wrap(make_image_tensor(data, batch));
      Tensor probs = vit::predict(run.params, images);
      const double* pp = probs.values().data();
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const double* row = pp + b * data.classes;
        double* acc = prob_sum.data() + (start + b) * data.classes;
        std::size_t arg = 0;
        for (std::size_t k = 0; k < data.classes; ++k) {
          acc[k] += row[k];
          if (row[k] > row[arg]) arg = k;
        }
        if (arg == data.labels[batch[b]]) ++correct;
      }
    }
    result.per_model_top1.push_back(static_cast<double>(correct) /
                                    static_cast<double>(n_test));
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < n_test; ++i) {
    const double* row = prob_sum.data() + i * data.classes;
    std::size_t arg = 0;
    for (std::size_t k = 1; k < data.classes; ++k) {
      if (row[k] > row[arg]) arg = k;
    }
    if (arg == data.labels[data.test_split[i]]) ++correct;
  }
  result.ensemble_top1 =
      static_cast<double>(correct) / static_cast<double>(n_test);

  std::ofstream os(out_dir / "ensemble.csv", std::ios::binary);
  os << "# config_hash=" << hash_hex(manifest.config_hash) << "\n";
  os << "member,seed,top1,total_train_flops\n";
  for (std::size_t mi = 0; mi < n_models; ++mi) {
    os << mi << ',' << base.seed + mi << ','
       << format_double(result.per_model_top1[mi]) << ",\n";
  }
  os << "ensemble," << base.seed << ','
     << format_double(result.ensemble_top1) << ','
     << result.total_train_flops << "\n";
  return result;
}

StrategyResult run_strategy_compare(const std::vector<std::string>& strategies,
                                    double keep_rate,
                                    const std::vector<std::uint64_t>& seeds,
                                    const TrainConfig& base,
                                    const Dataset& data,
                                    const fs::path& out_dir) {
  if (seeds.empty()) throw Error("strategy comparison needs a seed");
  fs::create_directories(out_dir);
  auto kv = train_config_kv(base);
  kv["strategies.keep_rate"] = format_double(keep_rate);
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    kv["strategies." + std::to_string(i)] = strategies[i];
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    kv["strategies.seed." + std::to_string(i)] = std::to_string(seeds[i]);
  }
  RunManifest manifest = make_manifest("strategies", kv);
  write_manifest(out_dir / "manifest.json", manifest);

  StrategyResult result;
  for (const std::string& name : strategies) {
    const Strategy strategy = strategy_from_name(name);
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      set_rate(cfg, keep_rate);
      cfg.sampling->strategy = strategy;
      cfg.sampling->seed = seed;
      TrainResult run = train(cfg, data);
      auto [loss, top1] = evaluate(run.params, data, data.test_split,
                                   cfg.batch_size, cfg.label_smoothing);
      (void)loss;
      result.rows.push_back(StrategyOutcome{name, seed, top1});
    }
  }
  for (const StrategyOutcome& row : result.rows) {
    result.mean_top1[row.strategy] += row.test_top1;
  }
  std::map<std::string, std::size_t> counts;
  for (const StrategyOutcome& row : result.rows) ++counts[row.strategy];
  for (auto& [name, sum] : result.mean_top1) {
    sum /= static_cast<double>(counts[name]);
  }

  std::ofstream os(out_dir / "strategies.csv", std::ios::binary);
  os << "# config_hash=" << hash_hex(manifest.config_hash) << "\n";
  os << "strategy,seed,top1,mean_top1\n";
  for (const StrategyOutcome& row : result.rows) {
    os << row.strategy << ',' << row.seed << ','
       << format_double(row.test_top1) << ','
       << format_double(result.mean_top1[row.strategy]) << "\n";
  }
  return result;
}

}  // namespace patchdrop::experiments
