#include "leaves/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "leaves/contrastive.hpp"
#include "leaves/ops.hpp"
#include "leaves/random.hpp"

namespace leaves {

namespace {

bool is_probe_param(const std::string& name) {
  return name.rfind("probe.", 0) == 0;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (lr_encoder <= 0.0 || lr_leaves <= 0.0 || lr_finetune <= 0.0)
    throw UsageError("learning rates must be > 0");
  if (batch_size < 2) throw UsageError("batch size must be >= 2 for contrastive pairing");
  if (label_fraction <= 0.0 || label_fraction > 1.0)
    throw UsageError("label fraction must lie in (0,1]");
  if (tau <= 0.0) throw UsageError("temperature must be > 0");
  if (eta <= 0.0) throw UsageError("eta must be > 0");
  encoder.validate();
}

AugmentBounds TrainConfig::bounds() const {
  AugmentBounds b;
  b.eta = eta;
  b.k_max = k_max;
  b.components = gmm_components;
  return b;
}

OptimizerState OptimizerState::for_store(const ParamStore& store) {
  OptimizerState state;
  state.slots.resize(store.count());
  for (std::size_t i = 0; i < store.count(); ++i) {
    if (!store[i].trainable) continue;
    state.slots[i].m.assign(store[i].value.size(), 0.0);
    state.slots[i].v.assign(store[i].value.size(), 0.0);
  }
  return state;
}

void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads,
               OptimizerState& state, double lr) {
  if (grads.size() != params.count() || state.slots.size() != params.count())
    throw ShapeError("adam_step: store/grads/state entry counts differ");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.count(); ++i) {
    if (grads[i].empty()) continue;
    if (!params[i].trainable)
      throw UsageError("adam_step: gradient supplied for state entry " + params[i].name);
    if (grads[i].size() != params[i].value.size())
      throw ShapeError("adam_step: gradient shape mismatch on " + params[i].name);
    auto& slot = state.slots[i];
    auto& value = params[i].value;
    for (std::size_t j = 0; j < value.size(); ++j) {
      slot.m[j] = state.beta1 * slot.m[j] + (1.0 - state.beta1) * grads[i][j];
      slot.v[j] = state.beta2 * slot.v[j] + (1.0 - state.beta2) * grads[i][j] * grads[i][j];
      const double mhat = slot.m[j] / bc1;
      const double vhat = slot.v[j] / bc2;
      value[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double EvalMetrics::sensitivity() const {
  if (!binary) throw UsageError("sensitivity requires a binary task");
  return sensitivity_raw;
}
double EvalMetrics::specificity() const {
  if (!binary) throw UsageError("specificity requires a binary task");
  return specificity_raw;
}
double EvalMetrics::auc() const {
  if (!binary) throw UsageError("AUC requires a binary task");
  return auc_raw;
}

EvalMetrics evaluate(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("evaluate expects logits (N,classes)");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw ShapeError("evaluate label count mismatch");
  if (k < 2) throw UsageError("evaluate needs at least 2 classes");

  const auto& v = logits.values();
  std::vector<int> pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (v[i * k + j] > v[i * k + arg]) arg = j;
    pred[i] = static_cast<int>(arg);
  }

  EvalMetrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (pred[i] == labels[i]) ++correct;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);

  double f1_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool is_c = labels[i] == static_cast<int>(c);
      const bool pred_c = pred[i] == static_cast<int>(c);
      if (is_c && pred_c) ++tp;
      if (!is_c && pred_c) ++fp;
      if (is_c && !pred_c) ++fn;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
  m.macro_f1 = f1_sum / static_cast<double>(k);

  if (k == 2) {
    m.binary = true;
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] == 1)
        (pred[i] == 1 ? tp : fn)++;
      else
        (pred[i] == 0 ? tn : fp)++;
    }
    m.sensitivity_raw = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.specificity_raw = (tn + fp) > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;

    // Rank-statistic AUC with midranks on the positive-class score.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> score(n);
    for (std::size_t i = 0; i < n; ++i) score[i] = v[i * k + 1] - v[i * k + 0];
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && score[order[j + 1]] == score[order[i]]) ++j;
      const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t q = i; q <= j; ++q) rank[order[q]] = mid;
      i = j + 1;
    }
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t q = 0; q < n; ++q)
      if (labels[q] == 1) {
        rank_sum_pos += rank[q];
        ++n_pos;
      }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
      m.auc_raw = 0.5;
    } else {
      m.auc_raw = (rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                      static_cast<double>(n_pos + 1)) /
                  (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    }
  }
  return m;
}

void RunLog::append(RunRecord record) {
  if (!records_.empty() && record.step <= records_.back().step)
    throw UsageError("RunLog steps must be strictly increasing");
  records_.push_back(record);
}

void RunLog::append_eval(EpochEval eval) { evals_.push_back(eval); }

void RunLog::save_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open " + path + " for writing");
  for (const auto& r : records_) {
    nlohmann::json j;
    j["type"] = "step";
    j["step"] = r.step;
    j["loss"] = r.loss;
    j["sigma_jitter"] = r.sigma_jitter;
    j["sigma_scale"] = r.sigma_scale;
    j["sigma_magw"] = r.sigma_magw;
    j["segments"] = r.segments;
    j["gmm_mean_of_means"] = r.gmm_mean_of_means;
    j["gmm_mean_of_scales"] = r.gmm_mean_of_scales;
    j["faith_rmse"] = r.faith_rmse;
    j["faith_corr"] = r.faith_corr;
    out << j.dump() << '\n';
  }
  for (const auto& e : evals_) {
    nlohmann::json j;
    j["type"] = "eval";
    j["epoch"] = e.epoch;
    j["accuracy"] = e.metrics.accuracy;
    j["macro_f1"] = e.metrics.macro_f1;
    if (e.metrics.binary) {
      j["sensitivity"] = e.metrics.sensitivity();
      j["specificity"] = e.metrics.specificity();
      j["auc"] = e.metrics.auc();
    }
    out << j.dump() << '\n';
  }
}

void RunLog::save_trajectories_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open " + path + " for writing");
  out << "step,sigma_jitter,sigma_scale,sigma_magw,segments,gmm_mean_of_means,gmm_mean_of_scales\n";
  for (const auto& r : records_) {
    out << r.step << ',' << fmt(r.sigma_jitter) << ',' << fmt(r.sigma_scale) << ','
        << fmt(r.sigma_magw) << ',' << r.segments << ',' << fmt(r.gmm_mean_of_means) << ','
        << fmt(r.gmm_mean_of_scales) << '\n';
  }
}

namespace {

// One contrastive forward on its own tape. Views come from the learnable
// module in kLeaves mode and from the frozen baseline in kFixedSigma mode.
struct ContrastiveForward {
  Tape tape;
  std::vector<Tensor> enc_leaves;
  AugmentLeaves aug_leaves;
  bool has_aug_leaves = false;
  Tensor view_a;
  Tensor loss;
};

void build_contrastive(ContrastiveForward& fwd, Encoder& encoder, const AugmentParams& augment,
                       const Tensor& x_values, const NoiseBundle& noise_a,
                       const NoiseBundle& noise_b, const TrainConfig& cfg, bool enc_grad,
                       bool aug_grad) {
  Tensor x = fwd.tape.leaf(x_values.detached(), false);
  Tensor view_a, view_b;
  if (cfg.mode == TrainMode::kFixedSigma) {
    const AugmentBounds bounds = cfg.bounds();
    view_a = fwd.tape.leaf(fixed_augment(x_values.detached(), cfg.fixed_sigma, cfg.k_max, bounds,
                                         noise_a),
                           false);
    view_b = fwd.tape.leaf(fixed_augment(x_values.detached(), cfg.fixed_sigma, cfg.k_max, bounds,
                                         noise_b),
                           false);
  } else {
    fwd.aug_leaves = attach_params(fwd.tape, augment, aug_grad);
    fwd.has_aug_leaves = true;
    view_a = leaves_forward(x, fwd.aug_leaves, augment.bounds(), noise_a);
    view_b = leaves_forward(x, fwd.aug_leaves, augment.bounds(), noise_b);
  }
  fwd.view_a = view_a;
  fwd.enc_leaves = encoder.attach(fwd.tape, enc_grad);
  Tensor za = encoder.encoder_forward(view_a, fwd.enc_leaves, true);
  Tensor zb = encoder.encoder_forward(view_b, fwd.enc_leaves, true);
  Tensor ha = encoder.projection_forward(za, fwd.enc_leaves);
  Tensor hb = encoder.projection_forward(zb, fwd.enc_leaves);
  fwd.loss = nt_xent(EmbeddingBatch{interleave_views(ha, hb), cfg.tau});
}

void fill_record(RunRecord& record, const AugmentParams& augment, double loss,
                 const Tensor& x_values, const Tensor& view_a) {
  record.loss = loss;
  record.sigma_jitter = augment.sigma_jitter();
  record.sigma_scale = augment.sigma_scale();
  record.sigma_magw = augment.sigma_magw();
  record.segments = augment.segments();
  const auto means = augment.gmm_means();
  const auto scales = augment.gmm_scales();
  record.gmm_mean_of_means =
      std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
  record.gmm_mean_of_scales =
      std::accumulate(scales.begin(), scales.end(), 0.0) / static_cast<double>(scales.size());
  const FaithfulnessReport faith = faithfulness_proxy(x_values, view_a.detached());
  record.faith_rmse = faith.rmse;
  double corr = 0.0;
  for (double c : faith.correlation) corr += c;
  record.faith_corr = corr / static_cast<double>(faith.correlation.size());
}

const std::vector<Tensor> kNoLeaves;

std::vector<std::vector<double>> collect_grads(const ParamStore& store,
                                               const std::vector<Tensor>& leaves,
                                               bool probe_only_filter = false) {
  std::vector<std::vector<double>> grads(store.count());
  for (std::size_t i = 0; i < store.count(); ++i) {
    if (!store[i].trainable) continue;
    if (probe_only_filter && !is_probe_param(store[i].name)) continue;
    grads[i] = leaves[i].grad();
  }
  return grads;
}

}  // namespace

double adversarial_step(Encoder& encoder, AugmentParams& augment, OptimizerState& encoder_state,
                        OptimizerState& augment_state, const Tensor& x, const NoiseBundle& noise_a,
                        const NoiseBundle& noise_b, const TrainConfig& cfg, bool update_encoder,
                        bool update_leaves, RunRecord* record) {
  ContrastiveForward fwd;
  build_contrastive(fwd, encoder, augment, x, noise_a, noise_b, cfg, update_encoder,
                    update_leaves && cfg.mode == TrainMode::kLeaves);
  const double loss = fwd.loss.item();
  if (!std::isfinite(loss)) {
    std::string diag = "NaN/Inf contrastive loss";
    if (record != nullptr)
      diag += " (sigma_j=" + fmt(augment.sigma_jitter()) + " sigma_s=" + fmt(augment.sigma_scale()) +
              " sigma_m=" + fmt(augment.sigma_magw()) + ")";
    throw DomainError(diag);
  }
  fwd.tape.backward(fwd.loss);

  if (update_encoder) {
    adam_step(encoder.store(), collect_grads(encoder.store(), fwd.enc_leaves), encoder_state,
              cfg.lr_encoder);
  }
  if (update_leaves && cfg.mode == TrainMode::kLeaves) {
    // Gradient ascent on the shared loss: descend on -L.
    const Tensor* ordered[] = {&fwd.aug_leaves.raw_sigma_jitter, &fwd.aug_leaves.raw_sigma_scale,
                               &fwd.aug_leaves.raw_sigma_magw,   &fwd.aug_leaves.raw_perm,
                               &fwd.aug_leaves.gmm_weights_raw,  &fwd.aug_leaves.gmm_means_raw,
                               &fwd.aug_leaves.gmm_scales_raw};
    std::vector<std::vector<double>> grads(augment.store().count());
    for (std::size_t i = 0; i < augment.store().count(); ++i) {
      grads[i] = ordered[i]->grad();
      for (double& g : grads[i]) g = -g;
    }
    adam_step(augment.store(), grads, augment_state, cfg.lr_leaves);
  }
  if (record != nullptr) fill_record(*record, augment, loss, x, fwd.view_a);
  return loss;
}

double contrastive_loss_eval(Encoder& encoder, const AugmentParams& augment, const Tensor& x,
                             const NoiseBundle& noise_a, const NoiseBundle& noise_b,
                             const TrainConfig& cfg) {
  // Running statistics are refreshed by the training-mode forward; restore
  // them so a pure evaluation has no side effects.
  ParamStore saved = encoder.store();
  ContrastiveForward fwd;
  build_contrastive(fwd, encoder, augment, x, noise_a, noise_b, cfg, false, false);
  const double loss = fwd.loss.item();
  encoder.store() = saved;
  return loss;
}

PretrainResult pretrain_adversarial(const Dataset& train, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.mode == TrainMode::kSupervised)
    throw UsageError("supervised mode has no pretraining stage");
  if (train.size() < 2) throw UsageError("pretraining needs at least 2 samples");

  Rng master(cfg.seed);
  Encoder encoder(cfg.encoder, master.next_seed());
  AugmentParams augment(cfg.bounds());
  OptimizerState encoder_state = OptimizerState::for_store(encoder.store());
  OptimizerState augment_state = OptimizerState::for_store(augment.store());
  const std::uint64_t shuffle_seed = master.next_seed();

  RunLog log;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    for (const Batch& batch : batches(train, cfg.batch_size, shuffle_seed, epoch, true)) {
      const AugmentBounds bounds = cfg.bounds();
      NoiseBundle noise_a = NoiseBundle::generate(master.next_seed(), batch.signals.dim(0),
                                                  batch.signals.dim(1), batch.signals.dim(2),
                                                  bounds);
      NoiseBundle noise_b = NoiseBundle::generate(master.next_seed(), batch.signals.dim(0),
                                                  batch.signals.dim(1), batch.signals.dim(2),
                                                  bounds);
      RunRecord record;
      record.step = ++step;
      try {
        adversarial_step(encoder, augment, encoder_state, augment_state, batch.signals, noise_a,
                         noise_b, cfg, true, true, &record);
      } catch (const DomainError& e) {
        std::string last = log.records().empty()
                               ? "none"
                               : "step " + std::to_string(log.records().back().step) + " loss " +
                                     fmt(log.records().back().loss);
        throw DomainError(std::string(e.what()) + " at step " + std::to_string(step) +
                          "; last good record: " + last);
      }
      if (!encoder.store().all_finite() || !augment.store().all_finite())
        throw DomainError("non-finite parameter after step " + std::to_string(step));
      log.append(record);
    }
  }
  return PretrainResult{std::move(encoder), std::move(augment), std::move(log)};
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects (N,K) logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw ShapeError("cross_entropy label count mismatch");

  // Constant row-max shift keeps the softmax exact and stable.
  std::vector<double> row_max(n, -1e300);
  const auto& v = logits.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) row_max[i] = std::max(row_max[i], v[i * k + j]);
  Tensor shifted = sub(logits, Tensor({n, 1}, std::move(row_max)));
  Tensor lse = log(sum(exp(shifted), 1));  // (N)

  std::vector<double> one_hot(n * k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw DomainError("label out of range in cross_entropy");
    one_hot[i * k + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  Tensor true_logit = sum(mul(shifted, Tensor({n, k}, std::move(one_hot))), 1);
  return mean(sub(lse, true_logit));
}

Tensor predict_logits(Encoder& encoder, const Dataset& ds) {
  Tape tape;
  std::vector<Tensor> leaves = encoder.attach(tape, false);
  Tensor x = tape.leaf(ds.signals.detached(), false);
  Tensor z = encoder.encoder_forward(x, leaves, false);
  return encoder.probe_forward(z, leaves).detached();
}

FinetuneResult finetune(Encoder& encoder, const Dataset& labeled_train, const Dataset& test,
                        const TrainConfig& cfg) {
  std::set<int> distinct(labeled_train.labels.begin(), labeled_train.labels.end());
  if (distinct.size() < 2) throw UsageError("fine-tuning needs at least 2 distinct label values");

  Rng master(cfg.seed ^ 0x66696e65ULL);  // decoupled from the pretraining stream
  OptimizerState state = OptimizerState::for_store(encoder.store());
  const std::uint64_t shuffle_seed = master.next_seed();

  RunLog log;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
    for (const Batch& batch : batches(labeled_train, cfg.batch_size, shuffle_seed, epoch, false)) {
      Tape tape;
      std::vector<Tensor> leaves = encoder.attach(tape, true);
      Tensor x = tape.leaf(batch.signals.detached(), false);
      Tensor z = encoder.encoder_forward(x, leaves, !cfg.probe_only);
      Tensor logits = encoder.probe_forward(z, leaves);
      Tensor loss = cross_entropy(logits, batch.labels);
      if (!std::isfinite(loss.item()))
        throw DomainError("non-finite fine-tuning loss at step " + std::to_string(step + 1));
      tape.backward(loss);
      adam_step(encoder.store(), collect_grads(encoder.store(), leaves, cfg.probe_only), state,
                cfg.lr_finetune);
      RunRecord record;
      record.step = ++step;
      record.loss = loss.item();
      log.append(record);
    }
    if (test.size() > 0)
      log.append_eval(EpochEval{epoch, evaluate(predict_logits(encoder, test), test.labels)});
  }

  FinetuneResult result;
  result.metrics = test.size() > 0 ? evaluate(predict_logits(encoder, test), test.labels)
                                   : EvalMetrics{};
  result.log = std::move(log);
  return result;
}

std::vector<GridRow> baseline_grid(const Dataset& train, const Dataset& test,
                                   const TrainConfig& cfg, const std::vector<double>& sigmas) {
  if (sigmas.empty()) throw UsageError("baseline grid needs a non-empty sigma list");
  std::vector<GridRow> rows;
  for (double sigma : sigmas) {
    TrainConfig grid_cfg = cfg;
    grid_cfg.mode = TrainMode::kFixedSigma;
    grid_cfg.fixed_sigma = sigma;
    PretrainResult pre = pretrain_adversarial(train, grid_cfg);
    Dataset labeled = label_subsample(train, grid_cfg.label_fraction, grid_cfg.seed);
    FinetuneResult fine = finetune(pre.encoder, labeled, test, grid_cfg);
    rows.push_back(GridRow{sigma, fine.metrics.accuracy, fine.metrics.macro_f1});
  }
  return rows;
}

void write_grid_csv(const std::string& path, const std::vector<GridRow>& rows) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open " + path + " for writing");
  out << "sigma,accuracy,macro_f1\n";
  for (const auto& r : rows)
    out << fmt(r.sigma) << ',' << fmt(r.accuracy) << ',' << fmt(r.macro_f1) << '\n';
}

}  // namespace leaves
