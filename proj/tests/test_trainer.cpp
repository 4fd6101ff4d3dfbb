#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "leaves/data.hpp"
#include "leaves/ops.hpp"
#include "leaves/random.hpp"
#include "leaves/trainer.hpp"

using namespace leaves;

namespace {

ParamStore single_param(double v) {
  ParamStore store;
  store.add("x", Shape{}, v);
  return store;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.pretrain_epochs = 2;
  cfg.finetune_epochs = 3;
  cfg.encoder.block_widths = {4, 8};
  cfg.encoder.projection_dim = 4;
  cfg.encoder.num_classes = 3;
  return cfg;
}

Dataset tiny_dataset(std::size_t per_class = 8, std::size_t len = 32) {
  SyntheticSpec spec;
  spec.samples_per_class = per_class;
  spec.length = len;
  spec.noise_level = 0.05;
  return gen_synthetic(spec);
}

}  // namespace

TEST_CASE("adam_step basics") {
  ParamStore p = single_param(1.0);
  OptimizerState st = OptimizerState::for_store(p);
  adam_step(p, {{0.0}}, st, 0.1);
  CHECK(p[0].value[0] == 1.0);

  ParamStore q = single_param(1.0);
  OptimizerState st2 = OptimizerState::for_store(q);
  adam_step(q, {{1.0}}, st2, 0.1);
  CHECK(q[0].value[0] == doctest::Approx(0.9).epsilon(1e-6));

  // Skipped entries (empty gradient) stay untouched.
  ParamStore r = single_param(2.5);
  OptimizerState st3 = OptimizerState::for_store(r);
  adam_step(r, {{}}, st3, 0.1);
  CHECK(r[0].value[0] == 2.5);

  CHECK_THROWS_AS(adam_step(r, {}, st3, 0.1), ShapeError);
}

TEST_CASE("adam converges on a 1-D quadratic") {
  ParamStore p = single_param(3.0);
  OptimizerState st = OptimizerState::for_store(p);
  for (int i = 0; i < 500; ++i) {
    const double g = 2.0 * p[0].value[0];
    adam_step(p, {{g}}, st, 0.05);
  }
  CHECK(std::abs(p[0].value[0]) < 1e-3);
}

TEST_CASE("evaluate: perfect, degenerate, and multiclass guard") {
  Tensor perfect(Shape{4, 2}, {5, 0, 0, 5, 5, 0, 0, 5});
  EvalMetrics m = evaluate(perfect, {0, 1, 0, 1});
  CHECK(m.accuracy == 1.0);
  CHECK(m.macro_f1 == 1.0);
  CHECK(m.sensitivity() == 1.0);
  CHECK(m.specificity() == 1.0);
  CHECK(m.auc() == 1.0);

  // All-positive predictor on balanced binary labels.
  Tensor allpos(Shape{4, 2}, {0, 5, 0, 5, 0, 5, 0, 5});
  EvalMetrics ap = evaluate(allpos, {0, 1, 0, 1});
  CHECK(ap.sensitivity() == 1.0);
  CHECK(ap.specificity() == 0.0);

  Tensor multi(Shape{2, 3}, {1, 0, 0, 0, 1, 0});
  EvalMetrics mm = evaluate(multi, {0, 1});
  CHECK(mm.accuracy == 1.0);
  CHECK_THROWS_AS(mm.auc(), UsageError);
  CHECK_THROWS_AS(mm.sensitivity(), UsageError);
}

TEST_CASE("evaluate: AUC of random scores is near one half") {
  Rng rng(50);
  const std::size_t n = 10000;
  std::vector<double> logits(n * 2);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    logits[2 * i] = 0.0;
    logits[2 * i + 1] = 2.0 * rng.uniform_open() - 1.0;
    labels[i] = rng.uniform_open() < 0.5 ? 0 : 1;
  }
  EvalMetrics m = evaluate(Tensor(Shape{n, 2}, std::move(logits)), labels);
  CHECK(std::abs(m.auc() - 0.5) < 0.02);
}

TEST_CASE("cross entropy of uniform logits is log(classes)") {
  Tape tape;
  Tensor logits = tape.leaf(Shape{2, 3}, std::vector<double>(6, 0.0), false);
  CHECK(cross_entropy(logits, {0, 2}).item() == std::log(3.0));
}

TEST_CASE("run log enforces monotone steps and writes both formats") {
  RunLog log;
  RunRecord r;
  r.step = 1;
  r.loss = 2.5;
  log.append(r);
  RunRecord same = r;
  CHECK_THROWS_AS(log.append(same), UsageError);
  r.step = 2;
  log.append(r);

  const std::string jsonl = "/tmp/leaves_test_runlog.jsonl";
  const std::string csv = "/tmp/leaves_test_traj.csv";
  log.save_jsonl(jsonl);
  log.save_trajectories_csv(csv);
  std::ifstream cf(csv);
  std::string header;
  std::getline(cf, header);
  CHECK(header ==
        "step,sigma_jitter,sigma_scale,sigma_magw,segments,gmm_mean_of_means,gmm_mean_of_scales");
  std::size_t lines = 0;
  for (std::string line; std::getline(cf, line);) ++lines;
  CHECK(lines == 2);
  std::remove(jsonl.c_str());
  std::remove(csv.c_str());
}

TEST_CASE("adversarial step: frozen sides stay bitwise unchanged") {
  TrainConfig cfg = tiny_config();
  Rng rng(51);
  Encoder encoder(cfg.encoder, rng.next_seed());
  AugmentParams augment(cfg.bounds());
  OptimizerState es = OptimizerState::for_store(encoder.store());
  OptimizerState as = OptimizerState::for_store(augment.store());

  Dataset ds = tiny_dataset();
  auto batch = batches(ds, cfg.batch_size, 1, 0, true).front();
  NoiseBundle na = NoiseBundle::generate(2, cfg.batch_size, 1, ds.length(), cfg.bounds());
  NoiseBundle nb = NoiseBundle::generate(3, cfg.batch_size, 1, ds.length(), cfg.bounds());

  const ParamStore aug_before = augment.store();
  const ParamStore enc_before = encoder.store();
  adversarial_step(encoder, augment, es, as, batch.signals, na, nb, cfg, true, false);
  CHECK(augment.store() == aug_before);
  CHECK_FALSE(encoder.store() == enc_before);

  Encoder encoder2(cfg.encoder, 99);
  const ParamStore enc2_before = encoder2.store();
  OptimizerState es2 = OptimizerState::for_store(encoder2.store());
  adversarial_step(encoder2, augment, es2, as, batch.signals, na, nb, cfg, false, true);
  // Trainable encoder weights unchanged; only running stats move.
  for (std::size_t i = 0; i < encoder2.store().count(); ++i)
    if (encoder2.store()[i].trainable) CHECK(encoder2.store()[i].value == enc2_before[i].value);
  CHECK_FALSE(augment.store() == aug_before);
}

TEST_CASE("adversarial directions over 10 probes") {
  TrainConfig cfg = tiny_config();
  cfg.lr_encoder = 1e-4;
  cfg.lr_leaves = 1e-4;
  Dataset ds = tiny_dataset();
  Rng rng(52);
  for (int probe = 0; probe < 10; ++probe) {
    Encoder encoder(cfg.encoder, rng.next_seed());
    AugmentParams augment(cfg.bounds());
    OptimizerState es = OptimizerState::for_store(encoder.store());
    OptimizerState as = OptimizerState::for_store(augment.store());
    auto batch = batches(ds, cfg.batch_size, rng.next_seed(), 0, true).front();
    NoiseBundle na =
        NoiseBundle::generate(rng.next_seed(), cfg.batch_size, 1, ds.length(), cfg.bounds());
    NoiseBundle nb =
        NoiseBundle::generate(rng.next_seed(), cfg.batch_size, 1, ds.length(), cfg.bounds());

    const double before =
        contrastive_loss_eval(encoder, augment, batch.signals, na, nb, cfg);
    adversarial_step(encoder, augment, es, as, batch.signals, na, nb, cfg, false, true);
    const double after_ascent =
        contrastive_loss_eval(encoder, augment, batch.signals, na, nb, cfg);
    CHECK(after_ascent >= before - 1e-9);

    adversarial_step(encoder, augment, es, as, batch.signals, na, nb, cfg, true, false);
    const double after_descent =
        contrastive_loss_eval(encoder, augment, batch.signals, na, nb, cfg);
    CHECK(after_descent <= after_ascent + 1e-9);
  }
}

TEST_CASE("pretraining is deterministic end to end") {
  TrainConfig cfg = tiny_config();
  Dataset ds = tiny_dataset();
  PretrainResult a = pretrain_adversarial(ds, cfg);
  PretrainResult b = pretrain_adversarial(ds, cfg);
  CHECK(a.encoder.store() == b.encoder.store());
  CHECK(a.augment.store() == b.augment.store());
  REQUIRE(a.log.records().size() == b.log.records().size());
  CHECK(a.log.records().size() == cfg.pretrain_epochs * (ds.size() / cfg.batch_size));
  for (std::size_t i = 0; i < a.log.records().size(); ++i) {
    CHECK(a.log.records()[i].loss == b.log.records()[i].loss);
    CHECK(a.log.records()[i].sigma_jitter == b.log.records()[i].sigma_jitter);
  }
  // Bounds maintained after every step.
  for (const auto& r : a.log.records()) {
    CHECK(r.sigma_jitter > 0.0);
    CHECK(r.sigma_jitter <= cfg.eta);
    CHECK(r.segments >= 1);
    CHECK(r.segments <= cfg.k_max);
  }
}

TEST_CASE("supervised mode refuses to pretrain") {
  TrainConfig cfg = tiny_config();
  cfg.mode = TrainMode::kSupervised;
  CHECK_THROWS_AS(pretrain_adversarial(tiny_dataset(), cfg), UsageError);
}

TEST_CASE("finetune: zero epochs give chance-level probe and single-class rejection") {
  TrainConfig cfg = tiny_config();
  cfg.finetune_epochs = 0;
  Dataset ds = tiny_dataset();
  SplitResult parts = split(ds, 0.667, 4);
  Rng rng(53);
  Encoder encoder(cfg.encoder, rng.next_seed());
  FinetuneResult r = finetune(encoder, parts.train, parts.test, cfg);
  // Zero probe weights predict class 0 everywhere.
  std::size_t zeros = 0;
  for (int lab : parts.test.labels)
    if (lab == 0) ++zeros;
  CHECK(r.metrics.accuracy ==
        doctest::Approx(static_cast<double>(zeros) / static_cast<double>(parts.test.size())));

  Dataset single = parts.train;
  for (auto& lab : single.labels) lab = 0;
  CHECK_THROWS_AS(finetune(encoder, single, parts.test, cfg), UsageError);
}

TEST_CASE("finetune reaches full accuracy on a separable two-class task") {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.samples_per_class = 20;
  spec.length = 64;
  spec.base_frequencies = {2.0, 8.0};
  spec.noise_level = 0.02;
  spec.amplitude_jitter = 0.05;
  Dataset ds = gen_synthetic(spec);
  SplitResult parts = split(ds, 0.5, 9);
  NormStats stats = normalize_fit(parts.train, NormMode::kZScorePerChannel);
  normalize_apply(parts.test, stats);

  TrainConfig cfg = tiny_config();
  cfg.encoder.num_classes = 2;
  cfg.finetune_epochs = 40;
  cfg.batch_size = 10;
  cfg.label_fraction = 1.0;
  Rng rng(54);
  Encoder encoder(cfg.encoder, rng.next_seed());
  FinetuneResult r = finetune(encoder, parts.train, parts.test, cfg);
  CHECK(r.metrics.accuracy == 1.0);
  CHECK(r.metrics.binary);
  CHECK(r.log.evals().size() == cfg.finetune_epochs);
}

TEST_CASE("grid csv header is exact") {
  const std::string path = "/tmp/leaves_test_grid.csv";
  write_grid_csv(path, {{0.01, 0.5, 0.4}, {0.02, 0.6, 0.5}});
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "sigma,accuracy,macro_f1");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 2);
  std::remove(path.c_str());

  CHECK_THROWS_AS(baseline_grid(tiny_dataset(), tiny_dataset(), tiny_config(), {}), UsageError);
}

TEST_CASE("config validation") {
  TrainConfig cfg = tiny_config();
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = tiny_config();
  cfg.label_fraction = 0.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = tiny_config();
  cfg.lr_leaves = -1.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}
