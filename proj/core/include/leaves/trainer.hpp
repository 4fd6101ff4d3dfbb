#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leaves/augment.hpp"
#include "leaves/data.hpp"
#include "leaves/encoder.hpp"
#include "leaves/params.hpp"

namespace leaves {

enum class TrainMode { kLeaves, kFixedSigma, kSupervised };

struct TrainConfig {
  std::uint64_t seed = 7;
  std::size_t batch_size = 32;
  std::size_t pretrain_epochs = 20;
  std::size_t finetune_epochs = 10;
  double lr_encoder = 1e-3;
  double lr_leaves = 1e-3;
  double lr_finetune = 1e-3;
  double tau = 0.05;
  double eta = 0.05;
  std::size_t gmm_components = 6;
  std::size_t k_max = 5;
  double label_fraction = 0.1;
  TrainMode mode = TrainMode::kLeaves;
  double fixed_sigma = 0.03;  // fixed-sigma mode only
  bool probe_only = false;
  EncoderConfig encoder;

  void validate() const;
  AugmentBounds bounds() const;
};

/// Adam accumulators, one slot per ParamStore entry (empty for state-only
/// entries). beta1=0.9, beta2=0.999, eps=1e-8.
struct OptimizerState {
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<Slot> slots;
  std::size_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  static OptimizerState for_store(const ParamStore& store);
};

/// Bias-corrected Adam update; grads are aligned with the store entries and
/// may be empty for entries to skip.
void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads,
               OptimizerState& state, double lr);

struct EvalMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  bool binary = false;
  // Binary-only metrics; the accessors refuse multiclass use.
  double sensitivity() const;
  double specificity() const;
  double auc() const;
  double sensitivity_raw = 0.0, specificity_raw = 0.0, auc_raw = 0.0;
};
/// accuracy/macro-F1 for any arity; sensitivity, specificity and rank-based
/// AUC when the task is binary.
EvalMetrics evaluate(const Tensor& logits, const std::vector<int>& labels);

struct RunRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double sigma_jitter = 0.0, sigma_scale = 0.0, sigma_magw = 0.0;
  std::size_t segments = 1;
  double gmm_mean_of_means = 0.0, gmm_mean_of_scales = 0.0;
  double faith_rmse = 0.0, faith_corr = 0.0;
};

struct EpochEval {
  std::size_t epoch = 0;
  EvalMetrics metrics;
};

/// Append-only training log with monotone step indexes.
class RunLog {
 public:
  void append(RunRecord record);
  void append_eval(EpochEval eval);
  const std::vector<RunRecord>& records() const { return records_; }
  const std::vector<EpochEval>& evals() const { return evals_; }

  void save_jsonl(const std::string& path) const;
  void save_trajectories_csv(const std::string& path) const;

 private:
  std::vector<RunRecord> records_;
  std::vector<EpochEval> evals_;
};

/// One adversarial step on a fixed batch with frozen noise: a single
/// backward pass, encoder descending the loss and the augmenter ascending
/// it. Either side can be frozen for direction probes. Returns the loss at
/// the pre-update parameters.
double adversarial_step(Encoder& encoder, AugmentParams& augment, OptimizerState& encoder_state,
                        OptimizerState& augment_state, const Tensor& x, const NoiseBundle& noise_a,
                        const NoiseBundle& noise_b, const TrainConfig& cfg, bool update_encoder,
                        bool update_leaves, RunRecord* record = nullptr);

/// Contrastive loss of the current parameters on a fixed batch and frozen
/// noise, without any update.
double contrastive_loss_eval(Encoder& encoder, const AugmentParams& augment, const Tensor& x,
                             const NoiseBundle& noise_a, const NoiseBundle& noise_b,
                             const TrainConfig& cfg);

struct PretrainResult {
  Encoder encoder;
  AugmentParams augment;
  RunLog log;
};
/// Contrastive pretraining. kLeaves trains the augmenter adversarially;
/// kFixedSigma uses the frozen baseline augmentations at cfg.fixed_sigma.
PretrainResult pretrain_adversarial(const Dataset& train, const TrainConfig& cfg);

struct FinetuneResult {
  EvalMetrics metrics;
  RunLog log;
};
/// Cross-entropy training of encoder+probe (probe-only behind the flag) on
/// the labeled set; metrics come from the held-out test set only.
FinetuneResult finetune(Encoder& encoder, const Dataset& labeled_train, const Dataset& test,
                        const TrainConfig& cfg);

/// Test-set logits in eval mode (running-statistics normalization).
Tensor predict_logits(Encoder& encoder, const Dataset& ds);

struct GridRow {
  double sigma = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};
/// Fixed-sigma SimCLR grid: pretrain + finetune per sigma.
std::vector<GridRow> baseline_grid(const Dataset& train, const Dataset& test,
                                   const TrainConfig& cfg, const std::vector<double>& sigmas);
void write_grid_csv(const std::string& path, const std::vector<GridRow>& rows);

/// Cross entropy of logits (N,K) against integer labels, as a tape scalar.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace leaves
