// Command-line front end: dataset generation, training, evaluation, cost
// reports, sweeps, robustness/ensemble/strategy studies and SVG plots.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "patchdrop/cost.hpp"
#include "patchdrop/dataset.hpp"
#include "patchdrop/experiments.hpp"
#include "patchdrop/flops.hpp"
#include "patchdrop/manifest.hpp"
#include "patchdrop/model.hpp"
#include "patchdrop/plot.hpp"
#include "patchdrop/sampler.hpp"
#include "patchdrop/synth.hpp"
#include "patchdrop/trainer.hpp"

namespace fs = std::filesystem;
using namespace patchdrop;

namespace {

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_rates(const std::string& csv, const char* what) {
  std::vector<double> out;
  for (const std::string& s : split_list(csv)) {
    const double r = std::stod(s);
    if (!(r > 0.0) || r > 1.0) {
      throw UsageError(std::string(what) + " value " + s + " outside (0, 1]");
    }
    out.push_back(r);
  }
  if (out.empty()) throw UsageError(std::string(what) + " list is empty");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> out;
  for (const std::string& s : split_list(csv)) out.push_back(std::stoull(s));
  if (out.empty()) throw UsageError("seed list is empty");
  return out;
}

fs::path runs_root() {
  if (const char* env = std::getenv("PATCHDROP_RUNS_DIR")) return env;
  return "runs";
}

// Flags shared by every command that builds a model or trains one.
struct TrainFlags {
  std::string variant;
  std::size_t depth = 0, width = 0, heads = 0;
  std::size_t patch = 4, image = 32, image_w = 0;
  std::size_t classes = 4, channels = 1, mlp_ratio = 4;

  double keep = 1.0;
  double keep_lo = 0.0, keep_hi = 0.0;
  bool no_dropout = false;
  std::string strategy = "random";
  bool per_batch_keepset = false;

  std::string data_path, splits_path;
  std::size_t epochs = 30, batch = 32, warmup_epochs = 2, patience = 0;
  double lr = 0.05, momentum = 0.9, weight_decay = 1e-4,
         label_smoothing = 0.1;
  std::uint64_t seed = 1;
  bool no_flip = false, no_crop_pad = false, no_decay_all = false;

  std::string out;
  bool dry_run = false;

  CLI::Option* variant_opt = nullptr;

  void add_model_flags(CLI::App* cmd) {
    variant_opt = cmd->add_option("--variant", variant,
                                  "Model variant: tiny, small, base, large");
    cmd->add_option("--depth", depth, "Transformer blocks");
    cmd->add_option("--width", width, "Embedding width");
    cmd->add_option("--heads", heads, "Attention heads");
    cmd->add_option("--patch", patch, "Patch size in pixels");
    cmd->add_option("--image", image, "Image size (square)");
    cmd->add_option("--image-w", image_w, "Image width if not square");
    cmd->add_option("--classes", classes, "Class count");
    cmd->add_option("--channels", channels, "Image channels");
    cmd->add_option("--mlp-ratio", mlp_ratio, "MLP hidden/width ratio");
  }

  void add_sampling_flags(CLI::App* cmd) {
    cmd->add_option("--keep", keep, "Keep rate in (0, 1]")
        ->check(CLI::Range(std::nextafter(0.0, 1.0), 1.0));
    cmd->add_option("--keep-lo", keep_lo,
                    "Keep-rate interval lower bound (with --keep-hi)")
        ->check(CLI::Range(std::nextafter(0.0, 1.0), 1.0));
    cmd->add_option("--keep-hi", keep_hi,
                    "Keep-rate interval upper bound (with --keep-lo)")
        ->check(CLI::Range(std::nextafter(0.0, 1.0), 1.0));
    cmd->add_flag("--no-dropout", no_dropout,
                  "Bypass the sampling machinery entirely");
    cmd->add_option("--strategy", strategy,
                    "Sampling strategy: random, uniform, structured, cropping");
    cmd->add_flag("--per-batch-keepset", per_batch_keepset,
                  "Share one keep set across each batch");
  }

  void add_train_flags(CLI::App* cmd, bool need_data = true) {
    CLI::Option* d = cmd->add_option("--data", data_path, "TID dataset path");
    CLI::Option* s =
        cmd->add_option("--splits", splits_path, "Split file path");
    if (need_data) {
      d->required();
      s->required();
    }
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--batch", batch, "Batch size");
    cmd->add_option("--lr", lr, "Base learning rate");
    cmd->add_option("--warmup-epochs", warmup_epochs, "Linear warmup epochs");
    cmd->add_option("--momentum", momentum, "SGD momentum");
    cmd->add_option("--weight-decay", weight_decay, "Weight decay");
    cmd->add_option("--label-smoothing", label_smoothing, "Label smoothing");
    cmd->add_option("--seed", seed, "Run seed");
    cmd->add_option("--patience", patience,
                    "Early-stop patience in epochs (0 disables)");
    cmd->add_flag("--no-flip", no_flip, "Disable horizontal flips");
    cmd->add_flag("--no-crop-pad", no_crop_pad, "Disable pad-and-crop");
    cmd->add_flag("--no-decay-all", no_decay_all,
                  "Exempt norms, biases, CLS and positions from weight decay");
    cmd->add_option("--out", out, "Output directory");
    cmd->add_flag("--dry-run", dry_run,
                  "Print the manifest and cost prediction, then exit");
  }

  ModelConfig model() const {
    ModelConfig mc;
    if (variant_opt && variant_opt->count() > 0) {
      mc = ModelConfig::variant(variant);
    } else {
      mc.depth = 2;
      mc.width = 32;
      mc.heads = 4;
    }
    if (depth) mc.depth = depth;
    if (width) mc.width = width;
    if (heads) mc.heads = heads;
    mc.patch = patch;
    mc.image_h = image;
    mc.image_w = image_w ? image_w : image;
    mc.classes = classes;
    mc.channels = channels;
    mc.mlp_ratio = mlp_ratio;
    mc.validate();
    return mc;
  }

  TrainConfig train_config() const {
    TrainConfig cfg;
    cfg.model = model();
    const bool interval = keep_lo > 0.0 || keep_hi > 0.0;
    if (interval && no_dropout) {
      throw UsageError("--no-dropout conflicts with --keep-lo/--keep-hi");
    }
    if (interval) {
      if (!(keep_lo > 0.0) || !(keep_hi > 0.0)) {
        throw UsageError("--keep-lo and --keep-hi must be given together");
      }
      cfg.sampling = SamplingSpec::interval(
          strategy_from_name(strategy), keep_lo, keep_hi, seed,
          cfg.model.grid_rows(), cfg.model.grid_cols());
    } else if (!no_dropout) {
      cfg.sampling = SamplingSpec::fixed(strategy_from_name(strategy), keep,
                                         seed, cfg.model.grid_rows(),
                                         cfg.model.grid_cols());
    }
    cfg.per_batch_keepset = per_batch_keepset;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.base_lr = lr;
    cfg.warmup_epochs = warmup_epochs;
    cfg.momentum = momentum;
    cfg.weight_decay = weight_decay;
    cfg.label_smoothing = label_smoothing;
    cfg.seed = seed;
    cfg.early_stop_patience = patience;
    cfg.flip = !no_flip;
    cfg.crop_pad = !no_crop_pad;
    cfg.decay_all = !no_decay_all;
    return cfg;
  }

  Dataset load() const {
    Dataset data = load_dataset(data_path);
    load_splits(splits_path, data);
    return data;
  }

  fs::path out_dir(const std::string& sub, std::uint64_t hash) const {
    if (!out.empty()) return out;
    return runs_root() / (sub + "-" + hash_hex(hash).substr(8));
  }
};

int print_dry_run(const RunManifest& manifest, const TrainConfig& cfg) {
  std::cout << manifest_json(manifest);
  const double rate = cfg.sampling && cfg.sampling->keep_rate
                          ? *cfg.sampling->keep_rate
                          : 1.0;
  const std::size_t n = cfg.model.patch_count();
  const std::size_t k = kept_count(rate, n);
  std::cout << "predicted_theoretical_flops="
            << cost::theoretical_flops(cfg.model.depth, k, cfg.model.width)
            << "\n";
  std::cout << "predicted_empirical_flops="
            << cost::empirical_flops(cfg.model, k) << "\n";
  std::cout << "predicted_relative_compute="
            << format_double(cost::relative_compute(rate, n, cfg.model.width))
            << "\n";
  return 0;
}

void add_config_file(CLI::App* cmd) {
  cmd->set_config("--config", "", "Flat key=value config file");
  cmd->allow_config_extras(false);
}

int cmd_dataset_gen(const std::string& kind, const std::string& out,
                    std::size_t train, std::size_t val, std::size_t test,
                    std::size_t size, std::uint64_t seed) {
  Dataset data;
  if (kind == "texture") {
    data = synth::texture_benchmark(train, val, test, size, seed);
  } else if (kind == "separable") {
    data = synth::separable_pair(train, val, test, size, seed);
  } else {
    throw UsageError("unknown dataset kind '" + kind + "'");
  }
  fs::path dir = out.empty() ? fs::path("dataset") : fs::path(out);
  fs::create_directories(dir);
  std::map<std::string, std::string> kv{
      {"kind", kind},           {"train", std::to_string(train)},
      {"val", std::to_string(val)}, {"test", std::to_string(test)},
      {"size", std::to_string(size)}, {"seed", std::to_string(seed)}};
  RunManifest manifest = make_manifest("dataset-gen", kv);
  write_manifest(dir / "manifest.json", manifest);
  save_dataset(dir / "data.tid", data);
  save_splits(dir / "splits.tsp", data);
  std::cout << "wrote " << (dir / "data.tid").string() << " ("
            << data.count() << " images, " << data.classes << " classes)\n";
  return 0;
}

int cmd_train(const TrainFlags& flags) {
  TrainConfig cfg = flags.train_config();
  auto kv = experiments::train_config_kv(cfg);
  RunManifest manifest = make_manifest("train", kv);
  if (flags.dry_run) return print_dry_run(manifest, cfg);

  Dataset data = flags.load();
  const fs::path dir = flags.out_dir("train", manifest.config_hash);
  fs::create_directories(dir);
  write_manifest(dir / "manifest.json", manifest);

  TrainResult run = train(cfg, data);
  write_trainlog_csv(dir / "trainlog.csv", run.log);
  save_checkpoint(dir / "checkpoint.pdvt", run.params);
  auto [test_loss, test_top1] =
      evaluate(run.params, data, data.test_split, cfg.batch_size,
               cfg.label_smoothing);

  std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
  metrics << "# config_hash=" << hash_hex(manifest.config_hash) << "\n";
  metrics << "split,loss,top1,train_flops,best_epoch\n";
  metrics << "test," << format_double(test_loss) << ','
          << format_double(test_top1) << ',' << run.log.total_flops << ','
          << run.log.best_epoch << "\n";

  std::cout << "run dir: " << dir.string() << "\n";
  std::cout << "best val top1 " << format_double(run.log.best_val_top1)
            << " (epoch " << run.log.best_epoch << "), test top1 "
            << format_double(test_top1) << ", train FLOPs "
            << run.log.total_flops << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const TrainFlags& flags,
             const std::string& split, double eval_keep,
             std::uint64_t eval_seed, const std::string& out_csv) {
  ViTParams params = load_checkpoint(checkpoint);
  Dataset data = flags.load();
  const std::vector<std::uint32_t>* indices = &data.test_split;
  if (split == "val") indices = &data.val_split;
  else if (split == "train") indices = &data.train_split;
  else if (split != "test") throw UsageError("unknown split '" + split + "'");

  std::optional<double> rate;
  if (eval_keep > 0.0) rate = eval_keep;
  auto [loss, top1] = evaluate(params, data, *indices, flags.batch,
                               flags.label_smoothing, rate, eval_seed);
  std::cout << "split=" << split << " loss=" << format_double(loss)
            << " top1=" << format_double(top1) << "\n";
  if (!out_csv.empty()) {
    std::map<std::string, std::string> kv{
        {"checkpoint", checkpoint},
        {"split", split},
        {"eval_keep", format_double(eval_keep)},
        {"eval_seed", std::to_string(eval_seed)}};
    RunManifest manifest = make_manifest("eval", kv);
    std::ofstream os(out_csv, std::ios::binary);
    os << "# config_hash=" << hash_hex(manifest.config_hash) << "\n";
    os << "split,loss,top1\n";
    os << split << ',' << format_double(loss) << ',' << format_double(top1)
       << "\n";
    write_manifest(out_csv + ".manifest.json", manifest);
  }
  return 0;
}

int cmd_cost(const std::string& variants, const std::string& images,
             std::size_t patch, std::size_t channels, std::size_t classes,
             const std::string& keeps, const std::string& out) {
  std::map<std::string, std::string> kv{{"variants", variants},
                                        {"images", images},
                                        {"patch", std::to_string(patch)},
                                        {"channels", std::to_string(channels)},
                                        {"classes", std::to_string(classes)},
                                        {"keeps", keeps}};
  RunManifest manifest = make_manifest("cost", kv);

  std::ostringstream body;
  body << "# config_hash=" << hash_hex(manifest.config_hash) << "\n";
  body << cost::csv_header() << "\n";
  for (const std::string& variant : split_list(variants)) {
    for (const std::string& image : split_list(images)) {
      ModelConfig mc = ModelConfig::variant(variant);
      mc.patch = patch;
      mc.image_h = mc.image_w = std::stoul(image);
      mc.channels = channels;
      mc.classes = classes;
      mc.validate();
      for (double rate : parse_rates(keeps, "--keep")) {
        const std::string id = variant + "@" + image;
        body << cost::csv_row(cost::report(mc, rate, id)) << "\n";
      }
    }
  }

  if (out.empty()) {
    std::cout << body.str();
  } else {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw Error("cannot write " + out);
    os << body.str();
    write_manifest(out + ".manifest.json", manifest);
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int cmd_sweep(const TrainFlags& flags, const std::string& axis,
              const std::string& values, const std::string& seeds) {
  experiments::SweepPlan plan;
  plan.base = flags.train_config();
  plan.axis = experiments::axis_from_name(axis);
  plan.values = split_list(values);
  plan.seeds = parse_seeds(seeds);
  plan.validate();

  auto kv = experiments::train_config_kv(plan.base);
  kv["sweep.axis"] = axis;
  kv["sweep.values"] = values;
  kv["sweep.seeds"] = seeds;
  RunManifest manifest = make_manifest("sweep", kv);
  if (flags.dry_run) return print_dry_run(manifest, plan.base);

  Dataset data = flags.load();
  const fs::path dir = flags.out_dir("sweep", manifest.config_hash);
  fs::create_directories(dir);
  write_manifest(dir / "manifest.json", manifest);
  experiments::SweepResult result = experiments::run_sweep(plan, data, dir);
  std::size_t failed = 0;
  for (const auto& c : result.cells) failed += c.failed ? 1 : 0;
  std::cout << "sweep dir: " << dir.string() << " (" << result.cells.size()
            << " cells, " << failed << " failed)\n";
  return failed == 0 ? 0 : 1;
}

int cmd_robustness(const TrainFlags& flags, const std::string& train_rates,
                   const std::string& eval_rates) {
  const auto tr = parse_rates(train_rates, "--train-rates");
  const auto er = parse_rates(eval_rates, "--eval-rates");
  TrainConfig base = flags.train_config();
  auto kv = experiments::train_config_kv(base);
  kv["robustness.train_rates"] = train_rates;
  kv["robustness.eval_rates"] = eval_rates;
  RunManifest manifest = make_manifest("robustness", kv);
  if (flags.dry_run) return print_dry_run(manifest, base);

  Dataset data = flags.load();
  const fs::path dir = flags.out_dir("robustness", manifest.config_hash);
  experiments::run_robustness(tr, er, base, data, dir);
  std::cout << "robustness dir: " << dir.string() << "\n";
  return 0;
}

int cmd_ensemble(const TrainFlags& flags, std::size_t models, double keep) {
  TrainConfig base = flags.train_config();
  auto kv = experiments::train_config_kv(base);
  kv["ensemble.models"] = std::to_string(models);
  kv["ensemble.keep_rate"] = format_double(keep);
  RunManifest manifest = make_manifest("ensemble", kv);
  if (flags.dry_run) return print_dry_run(manifest, base);

  Dataset data = flags.load();
  const fs::path dir = flags.out_dir("ensemble", manifest.config_hash);
  experiments::EnsembleResult result =
      experiments::run_ensemble(models, keep, base, data, dir);
  std::cout << "ensemble top1 " << format_double(result.ensemble_top1)
            << ", total train FLOPs " << result.total_train_flops << "\n";
  return 0;
}

int cmd_strategies(const TrainFlags& flags, const std::string& strategies,
                   double keep, const std::string& seeds) {
  TrainConfig base = flags.train_config();
  auto kv = experiments::train_config_kv(base);
  kv["strategies.list"] = strategies;
  kv["strategies.keep"] = format_double(keep);
  kv["strategies.seeds"] = seeds;
  RunManifest manifest = make_manifest("strategies", kv);
  if (flags.dry_run) return print_dry_run(manifest, base);

  Dataset data = flags.load();
  const fs::path dir = flags.out_dir("strategies", manifest.config_hash);
  experiments::StrategyResult result = experiments::run_strategy_compare(
      split_list(strategies), keep, parse_seeds(seeds), base, data, dir);
  for (const auto& [name, mean] : result.mean_top1) {
    std::cout << name << " mean top1 " << format_double(mean) << "\n";
  }
  return 0;
}

int cmd_plot(const std::string& csv, const std::string& kind,
             const std::string& out) {
  plot::emit_plot(csv, plot::kind_from_name(kind), out);
  std::map<std::string, std::string> kv{
      {"csv", csv}, {"kind", kind}, {"out", out}};
  write_manifest(out + ".manifest.json", make_manifest("plot", kv));
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vision-transformer training with input patch dropout"};
  app.require_subcommand(1);

  // dataset-gen
  auto* gen = app.add_subcommand("dataset-gen",
                                 "Generate a synthetic TID dataset");
  std::string gen_kind = "texture", gen_out;
  std::size_t gen_train = 4000, gen_val = 500, gen_test = 500, gen_size = 32;
  std::uint64_t gen_seed = 7;
  gen->add_option("--kind", gen_kind, "texture or separable");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--train", gen_train, "Training images");
  gen->add_option("--val", gen_val, "Validation images");
  gen->add_option("--test", gen_test, "Test images");
  gen->add_option("--size", gen_size, "Image size");
  gen->add_option("--seed", gen_seed, "Generator seed");
  add_config_file(gen);

  // train
  auto* tr = app.add_subcommand("train", "Train one model");
  TrainFlags tr_flags;
  tr_flags.add_model_flags(tr);
  tr_flags.add_sampling_flags(tr);
  tr_flags.add_train_flags(tr);
  add_config_file(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  TrainFlags ev_flags;
  std::string ev_checkpoint, ev_split = "test", ev_out;
  double ev_keep = 0.0;
  std::uint64_t ev_seed = 0;
  ev->add_option("--checkpoint", ev_checkpoint, "Checkpoint path")->required();
  ev_flags.add_train_flags(ev);
  ev->add_option("--split", ev_split, "train, val or test");
  ev->add_option("--eval-keep", ev_keep,
                 "Evaluate with a random keep set at this rate")
      ->check(CLI::Range(std::nextafter(0.0, 1.0), 1.0));
  ev->add_option("--eval-seed", ev_seed, "Seed for evaluation keep sets");
  ev->add_option("--out-csv", ev_out, "Write metrics CSV here");
  add_config_file(ev);

  // cost
  auto* co = app.add_subcommand("cost", "FLOP and activation cost report");
  std::string co_variants = "base", co_images = "224", co_keeps = "1.0",
              co_out;
  std::size_t co_patch = 16, co_channels = 3, co_classes = 1000;
  co->add_option("--variant", co_variants, "Variant list (comma separated)");
  co->add_option("--image", co_images, "Image size list");
  co->add_option("--patch", co_patch, "Patch size");
  co->add_option("--channels", co_channels, "Image channels");
  co->add_option("--classes", co_classes, "Class count");
  co->add_option("--keep", co_keeps, "Keep rate list");
  co->add_option("--out", co_out, "Output CSV (stdout when absent)");
  add_config_file(co);

  // sweep
  auto* sw = app.add_subcommand("sweep", "Train along one axis");
  TrainFlags sw_flags;
  std::string sw_axis = "keep_rate", sw_values, sw_seeds = "1";
  sw_flags.add_model_flags(sw);
  sw_flags.add_sampling_flags(sw);
  sw_flags.add_train_flags(sw);
  sw->add_option("--axis", sw_axis,
                 "keep_rate, image_size, patch_size, variant, depth, strategy");
  sw->add_option("--values", sw_values, "Axis values (comma separated)")
      ->required();
  sw->add_option("--seeds", sw_seeds, "Seeds (comma separated)");
  add_config_file(sw);

  // robustness
  auto* ro = app.add_subcommand("robustness",
                                "Train/eval keep-rate cross matrix");
  TrainFlags ro_flags;
  std::string ro_train_rates = "1.0,0.5,0.25", ro_eval_rates =
      "1.0,0.5,0.25,0.1,0.05";
  ro_flags.add_model_flags(ro);
  ro_flags.add_sampling_flags(ro);
  ro_flags.add_train_flags(ro);
  ro->add_option("--train-rates", ro_train_rates, "Training keep rates");
  ro->add_option("--eval-rates", ro_eval_rates, "Evaluation keep rates");
  add_config_file(ro);

  // ensemble
  auto* en = app.add_subcommand("ensemble", "Train and average n models");
  TrainFlags en_flags;
  std::size_t en_models = 2;
  double en_keep = 0.5;
  en_flags.add_model_flags(en);
  en_flags.add_sampling_flags(en);
  en_flags.add_train_flags(en);
  en->add_option("--models", en_models, "Ensemble size");
  en->add_option("--ensemble-keep", en_keep, "Keep rate for every member")
      ->check(CLI::Range(std::nextafter(0.0, 1.0), 1.0));
  add_config_file(en);

  // strategies
  auto* st = app.add_subcommand("strategies", "Compare sampling strategies");
  TrainFlags st_flags;
  std::string st_list = "random,uniform,structured,cropping",
              st_seeds = "1";
  double st_keep = 0.25;
  st_flags.add_model_flags(st);
  st_flags.add_sampling_flags(st);
  st_flags.add_train_flags(st);
  st->add_option("--strategies", st_list, "Strategy list");
  st->add_option("--strategy-keep", st_keep, "Keep rate for the comparison")
      ->check(CLI::Range(std::nextafter(0.0, 1.0), 1.0));
  st->add_option("--seeds", st_seeds, "Seeds (comma separated)");
  add_config_file(st);

  // plot
  auto* pl = app.add_subcommand("plot", "Render a CSV as a deterministic SVG");
  std::string pl_csv, pl_kind, pl_out;
  pl->add_option("--csv", pl_csv, "Input CSV")->required();
  pl->add_option("--kind", pl_kind,
                 "keep_rate_curve, robustness or savings")->required();
  pl->add_option("--out", pl_out, "Output SVG")->required();
  add_config_file(pl);

  if (argc <= 1) {
    std::cout << app.help();
    return 2;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help / --version
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_dataset_gen(gen_kind, gen_out, gen_train, gen_val, gen_test,
                             gen_size, gen_seed);
    }
    if (tr->parsed()) return cmd_train(tr_flags);
    if (ev->parsed()) {
      return cmd_eval(ev_checkpoint, ev_flags, ev_split, ev_keep, ev_seed,
                      ev_out);
    }
    if (co->parsed()) {
      return cmd_cost(co_variants, co_images, co_patch, co_channels,
                      co_classes, co_keeps, co_out);
    }
    if (sw->parsed()) return cmd_sweep(sw_flags, sw_axis, sw_values, sw_seeds);
    if (ro->parsed()) {
      return cmd_robustness(ro_flags, ro_train_rates, ro_eval_rates);
    }
    if (en->parsed()) return cmd_ensemble(en_flags, en_models, en_keep);
    if (st->parsed()) return cmd_strategies(st_flags, st_list, st_keep,
                                            st_seeds);
    if (pl->parsed()) return cmd_plot(pl_csv, pl_kind, pl_out);
    std::cerr << "no subcommand selected\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
