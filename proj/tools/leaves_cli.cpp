#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "leaves/augment.hpp"
#include "leaves/config.hpp"
#include "leaves/data.hpp"
#include "leaves/encoder.hpp"
#include "leaves/gradsuite.hpp"
#include "leaves/trainer.hpp"

namespace fs = std::filesystem;
using namespace leaves;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIncompatible = 3;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Every tunable of a run, resolvable from (lowest to highest priority)
/// built-in defaults, the LEAVES_SEED environment variable, a key=value
/// config file, and command-line flags.
struct RunOptions {
  TrainConfig train;
  // Dataset: synthetic by default, CSV when data_csv is set.
  SyntheticSpec data;
  std::string data_csv;
  CsvSchema csv;
  double train_fraction = 0.667;
  std::string mode_name = "leaves";

  void apply_env() {
    if (const char* env = std::getenv("LEAVES_SEED")) {
      KeyValueConfig kv = KeyValueConfig::parse_string(std::string("seed = ") + env, "LEAVES_SEED");
      train.seed = kv.get_u64("seed");
    }
  }

  void apply_file(const KeyValueConfig& kv) {
    kv.require_known({"seed", "batch_size", "pretrain_epochs", "finetune_epochs", "lr_encoder",
                      "lr_leaves", "lr_finetune", "tau", "eta", "gmm_components", "k_max",
                      "label_fraction", "mode", "fixed_sigma", "probe_only", "classes",
                      "samples_per_class", "length", "channels", "noise_level", "amplitude_jitter",
                      "phase_jitter", "ecg_like", "data_seed", "train_fraction", "data_csv",
                      "csv_channels", "csv_length", "csv_classes"});
    if (kv.has("seed")) train.seed = kv.get_u64("seed");
    if (kv.has("batch_size")) train.batch_size = kv.get_size("batch_size");
    if (kv.has("pretrain_epochs")) train.pretrain_epochs = kv.get_size("pretrain_epochs");
    if (kv.has("finetune_epochs")) train.finetune_epochs = kv.get_size("finetune_epochs");
    if (kv.has("lr_encoder")) train.lr_encoder = kv.get_double("lr_encoder");
    if (kv.has("lr_leaves")) train.lr_leaves = kv.get_double("lr_leaves");
    if (kv.has("lr_finetune")) train.lr_finetune = kv.get_double("lr_finetune");
    if (kv.has("tau")) train.tau = kv.get_double("tau");
    if (kv.has("eta")) train.eta = kv.get_double("eta");
    if (kv.has("gmm_components")) train.gmm_components = kv.get_size("gmm_components");
    if (kv.has("k_max")) train.k_max = kv.get_size("k_max");
    if (kv.has("label_fraction")) train.label_fraction = kv.get_double("label_fraction");
    if (kv.has("mode")) mode_name = kv.get_string("mode");
    if (kv.has("fixed_sigma")) train.fixed_sigma = kv.get_double("fixed_sigma");
    if (kv.has("probe_only")) train.probe_only = kv.get_bool("probe_only");
    if (kv.has("classes")) data.classes = kv.get_size("classes");
    if (kv.has("samples_per_class")) data.samples_per_class = kv.get_size("samples_per_class");
    if (kv.has("length")) data.length = kv.get_size("length");
    if (kv.has("channels")) data.channels = kv.get_size("channels");
    if (kv.has("noise_level")) data.noise_level = kv.get_double("noise_level");
    if (kv.has("amplitude_jitter")) data.amplitude_jitter = kv.get_double("amplitude_jitter");
    if (kv.has("phase_jitter")) data.phase_jitter = kv.get_double("phase_jitter");
    if (kv.has("ecg_like")) data.ecg_like = kv.get_bool("ecg_like");
    if (kv.has("data_seed")) data.seed = kv.get_u64("data_seed");
    if (kv.has("train_fraction")) train_fraction = kv.get_double("train_fraction");
    if (kv.has("data_csv")) data_csv = kv.get_string("data_csv");
    if (kv.has("csv_channels")) csv.channels = kv.get_size("csv_channels");
    if (kv.has("csv_length")) csv.length = kv.get_size("csv_length");
    if (kv.has("csv_classes")) csv.classes = kv.get_size("csv_classes");
  }

  void finalize() {
    if (mode_name == "leaves")
      train.mode = TrainMode::kLeaves;
    else if (mode_name == "fixed")
      train.mode = TrainMode::kFixedSigma;
    else if (mode_name == "supervised")
      train.mode = TrainMode::kSupervised;
    else
      throw UsageError("mode must be one of leaves|fixed|supervised, got '" + mode_name + "'");
    data.channels = data_csv.empty() ? data.channels : csv.channels;
    train.encoder.channels_in = data_csv.empty() ? data.channels : csv.channels;
    train.encoder.num_classes = data_csv.empty() ? data.classes : std::max<std::size_t>(csv.classes, 2);
    train.validate();
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
      throw UsageError("train_fraction must lie in (0,1)");
  }

  void write_resolved(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot open " + path + " for writing");
    out << "# resolved run configuration\n";
    out << "seed = " << train.seed << '\n';
    out << "batch_size = " << train.batch_size << '\n';
    out << "pretrain_epochs = " << train.pretrain_epochs << '\n';
    out << "finetune_epochs = " << train.finetune_epochs << '\n';
    out << "lr_encoder = " << fmt(train.lr_encoder) << '\n';
    out << "lr_leaves = " << fmt(train.lr_leaves) << '\n';
    out << "lr_finetune = " << fmt(train.lr_finetune) << '\n';
    out << "tau = " << fmt(train.tau) << '\n';
    out << "eta = " << fmt(train.eta) << '\n';
    out << "gmm_components = " << train.gmm_components << '\n';
    out << "k_max = " << train.k_max << '\n';
    out << "label_fraction = " << fmt(train.label_fraction) << '\n';
    out << "mode = " << mode_name << '\n';
    out << "fixed_sigma = " << fmt(train.fixed_sigma) << '\n';
    out << "probe_only = " << (train.probe_only ? "true" : "false") << '\n';
    if (data_csv.empty()) {
      out << "classes = " << data.classes << '\n';
      out << "samples_per_class = " << data.samples_per_class << '\n';
      out << "length = " << data.length << '\n';
      out << "channels = " << data.channels << '\n';
      out << "noise_level = " << fmt(data.noise_level) << '\n';
      out << "amplitude_jitter = " << fmt(data.amplitude_jitter) << '\n';
      out << "phase_jitter = " << fmt(data.phase_jitter) << '\n';
      out << "ecg_like = " << (data.ecg_like ? "true" : "false") << '\n';
      out << "data_seed = " << data.seed << '\n';
    } else {
      out << "data_csv = " << data_csv << '\n';
      out << "csv_channels = " << csv.channels << '\n';
      out << "csv_length = " << csv.length << '\n';
      out << "csv_classes = " << csv.classes << '\n';
    }
    out << "train_fraction = " << fmt(train_fraction) << '\n';
  }
};

struct DataBundle {
  Dataset train, test;
};

DataBundle prepare_data(const RunOptions& opt) {
  Dataset full = opt.data_csv.empty() ? gen_synthetic(opt.data) : load_csv(opt.data_csv, opt.csv);
  SplitResult parts = split(full, opt.train_fraction, opt.data.seed + 1);
  NormStats stats = normalize_fit(parts.train, NormMode::kZScorePerChannel);
  normalize_apply(parts.test, stats);
  return DataBundle{std::move(parts.train), std::move(parts.test)};
}

fs::path make_run_dir(const std::string& out) {
  fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

int cmd_pretrain(const RunOptions& opt, const std::string& out) {
  if (opt.train.mode == TrainMode::kSupervised) {
    std::cerr << "pretrain: supervised mode has no pretraining stage\n";
    return kExitUsage;
  }
  const fs::path dir = make_run_dir(out);
  opt.write_resolved((dir / "config.resolved").string());
  DataBundle data = prepare_data(opt);
  PretrainResult result = pretrain_adversarial(data.train, opt.train);
  result.encoder.store().save_checkpoint((dir / "encoder.ckpt").string());
  result.augment.store().save_checkpoint((dir / "augment.ckpt").string());
  result.log.save_jsonl((dir / "runlog.jsonl").string());
  result.log.save_trajectories_csv((dir / "trajectories.csv").string());
  if (!result.log.records().empty())
    std::cout << "pretrain: " << result.log.records().size() << " steps, final loss "
              << fmt(result.log.records().back().loss) << '\n';
  return kExitOk;
}

int cmd_finetune(const RunOptions& opt, const std::string& out, const std::string& from) {
  const fs::path dir = make_run_dir(out);
  opt.write_resolved((dir / "config.resolved").string());
  DataBundle data = prepare_data(opt);

  Rng master(opt.train.seed);
  Encoder encoder(opt.train.encoder, master.next_seed());
  if (opt.train.mode != TrainMode::kSupervised) {
    if (from.empty()) {
      std::cerr << "finetune: --from run directory required unless mode = supervised\n";
      return kExitUsage;
    }
    const fs::path ckpt = fs::path(from) / "encoder.ckpt";
    if (!fs::exists(ckpt)) {
      std::cerr << "finetune: checkpoint not found: " << ckpt.string() << '\n';
      return kExitUsage;
    }
    try {
      encoder.store().load_checkpoint(ckpt.string());
    } catch (const DomainError& e) {
      std::cerr << "finetune: incompatible checkpoint: " << e.what() << '\n';
      return kExitIncompatible;
    }
  }

  Dataset labeled = label_subsample(data.train, opt.train.label_fraction, opt.train.seed);
  FinetuneResult result = finetune(encoder, labeled, data.test, opt.train);
  encoder.store().save_checkpoint((dir / "encoder_finetuned.ckpt").string());
  result.log.save_jsonl((dir / "runlog.jsonl").string());

  nlohmann::json metrics;
  metrics["accuracy"] = result.metrics.accuracy;
  metrics["macro_f1"] = result.metrics.macro_f1;
  metrics["labeled_samples"] = labeled.size();
  if (result.metrics.binary) {
    metrics["sensitivity"] = result.metrics.sensitivity();
    metrics["specificity"] = result.metrics.specificity();
    metrics["auc"] = result.metrics.auc();
  }
  std::ofstream mj(dir / "metrics.json");
  mj << metrics.dump(2) << '\n';
  std::cout << "finetune: accuracy " << fmt(result.metrics.accuracy) << ", macro-F1 "
            << fmt(result.metrics.macro_f1) << '\n';
  return kExitOk;
}

int cmd_grid(const RunOptions& opt, const std::string& out, const std::vector<double>& sigmas) {
  const fs::path dir = make_run_dir(out);
  opt.write_resolved((dir / "config.resolved").string());
  DataBundle data = prepare_data(opt);
  std::vector<GridRow> rows = baseline_grid(data.train, data.test, opt.train, sigmas);
  write_grid_csv((dir / "grid.csv").string(), rows);
  std::cout << "grid: " << rows.size() << " rows written\n";
  return kExitOk;
}

int cmd_preview(const RunOptions& opt, const std::string& out, const std::string& augment_ckpt,
                std::size_t samples) {
  const fs::path dir = make_run_dir(out);
  opt.write_resolved((dir / "config.resolved").string());
  DataBundle data = prepare_data(opt);
  if (samples == 0 || samples > data.train.size()) {
    std::cerr << "preview: sample count must lie in [1, " << data.train.size() << "]\n";
    return kExitUsage;
  }

  AugmentParams params(opt.train.bounds());
  if (!augment_ckpt.empty()) {
    try {
      params.store().load_checkpoint(augment_ckpt);
    } catch (const DomainError& e) {
      std::cerr << "preview: incompatible checkpoint: " << e.what() << '\n';
      return kExitIncompatible;
    }
  }

  Rng master(opt.train.seed);
  std::ofstream report(dir / "faithfulness.csv");
  report << "sample,rmse";
  for (std::size_t c = 0; c < data.train.channels(); ++c) report << ",corr_ch" << c;
  report << '\n';
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t c = data.train.channels(), len = data.train.length();
    std::vector<double> values(c * len);
    for (std::size_t j = 0; j < values.size(); ++j)
      values[j] = data.train.signals.at(i * c * len + j);
    Tensor x(Shape{1, c, len}, std::move(values));
    NoiseBundle noise = NoiseBundle::generate(master.next_seed(), 1, c, len, params.bounds());
    Tensor view = leaves_apply(x, params, noise);
    write_view_csv((dir / ("original_" + std::to_string(i) + ".csv")).string(), x);
    write_view_csv((dir / ("view_" + std::to_string(i) + ".csv")).string(), view);
    FaithfulnessReport f = faithfulness_proxy(x, view);
    report << i << ',' << fmt(f.rmse);
    for (double corr : f.correlation) report << ',' << fmt(corr);
    report << '\n';
  }
  std::cout << "preview: wrote " << samples << " original/view pairs\n";
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t seeds, double tolerance, bool flip_jitter) {
  GradSuiteOptions options;
  options.flip_jitter_gradient = flip_jitter;
  GradSuiteResult worst{"", 0.0};
  Rng master(seed);
  for (std::size_t s = 0; s < seeds; ++s) {
    GradSuiteResult w;
    gradient_suite_worst(master.next_seed(), options, w);
    if (w.max_rel_error > worst.max_rel_error) worst = w;
  }
  std::cout << "worst offender: " << worst.name << " (max rel error " << fmt(worst.max_rel_error)
            << ", tolerance " << fmt(tolerance) << ")\n";
  if (worst.max_rel_error >= tolerance) {
    std::cerr << "gradcheck FAILED: " << worst.name << " error " << fmt(worst.max_rel_error)
              << " >= " << fmt(tolerance) << '\n';
    return kExitCheckFailure;
  }
  std::cout << "gradcheck passed over " << seeds << " seeds\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learnable time-series augmentations with contrastive pretraining"};
  app.require_subcommand(1);

  std::string config_path, out_dir, from_dir, augment_ckpt;
  std::uint64_t seed_flag = 0;
  bool seed_given = false;
  std::string mode_flag;
  double fixed_sigma_flag = 0.0;
  bool fixed_sigma_given = false;
  bool probe_only_flag = false;
  std::size_t samples = 4;
  std::size_t gc_seeds = 5;
  double tolerance = 1e-4;
  bool flip_jitter = false;
  std::vector<double> sigmas{0.01, 0.02, 0.03, 0.04, 0.05};

  auto add_common = [&](CLI::App* cmd, bool needs_out) {
    cmd->add_option("--config", config_path, "key=value config file");
    auto* o = cmd->add_option("--out", out_dir, "run output directory");
    if (needs_out) o->required();
    cmd->add_option("--seed", seed_flag, "seed override")->each([&](const std::string&) {
      seed_given = true;
    });
  };

  CLI::App* pre = app.add_subcommand("pretrain", "adversarial contrastive pretraining");
  add_common(pre, true);
  pre->add_option("--mode", mode_flag, "leaves|fixed|supervised");
  pre->add_option("--fixed-sigma", fixed_sigma_flag, "intensity for fixed mode")
      ->each([&](const std::string&) { fixed_sigma_given = true; });

  CLI::App* fin = app.add_subcommand("finetune", "labeled fine-tuning and evaluation");
  add_common(fin, true);
  fin->add_option("--from", from_dir, "pretraining run directory with encoder.ckpt");
  fin->add_option("--mode", mode_flag, "leaves|fixed|supervised");
  fin->add_flag("--probe-only", probe_only_flag, "train the linear probe only");

  CLI::App* grid = app.add_subcommand("grid", "fixed-sigma baseline grid");
  add_common(grid, true);
  grid->add_option("--sigmas", sigmas, "sigma values to sweep");

  CLI::App* prev = app.add_subcommand("preview", "export original/view CSV pairs");
  add_common(prev, true);
  prev->add_option("--augment", augment_ckpt, "augmentation checkpoint to load");
  prev->add_option("--samples", samples, "number of samples to export");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gc->add_option("--seed", seed_flag, "base seed")->each([&](const std::string&) {
    seed_given = true;
  });
  gc->add_option("--seeds", gc_seeds, "number of random seeds");
  gc->add_option("--tolerance", tolerance, "maximum relative error");
  gc->add_flag("--flip-jitter-gradient", flip_jitter,
               "negate the analytic jitter gradient (checker self-test)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunOptions opt;
    opt.apply_env();
    if (!config_path.empty()) opt.apply_file(KeyValueConfig::parse_file(config_path));
    if (seed_given) opt.train.seed = seed_flag;
    if (!mode_flag.empty()) opt.mode_name = mode_flag;
    if (fixed_sigma_given) opt.train.fixed_sigma = fixed_sigma_flag;
    if (probe_only_flag) opt.train.probe_only = true;

    if (gc->parsed())
      return cmd_gradcheck(seed_given ? seed_flag : 11, gc_seeds, tolerance, flip_jitter);

    opt.finalize();
    if (pre->parsed()) return cmd_pretrain(opt, out_dir);
    if (fin->parsed()) return cmd_finetune(opt, out_dir, from_dir);
    if (grid->parsed()) return cmd_grid(opt, out_dir, sigmas);
    if (prev->parsed()) return cmd_preview(opt, out_dir, augment_ckpt, samples);
    std::cerr << "no subcommand\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailure;
  }
}
