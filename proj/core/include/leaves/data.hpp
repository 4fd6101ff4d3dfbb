#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leaves/tensor.hpp"

namespace leaves {

struct Dataset {
  Tensor signals;               // (N,C,L)
  std::vector<int> labels;      // values in [0, classes)
  std::size_t classes = 0;
  std::vector<std::string> channel_names;

  std::size_t size() const { return signals.rank() == 3 ? signals.dim(0) : 0; }
  std::size_t channels() const { return signals.rank() == 3 ? signals.dim(1) : 0; }
  std::size_t length() const { return signals.rank() == 3 ? signals.dim(2) : 0; }
  void validate() const;
};

/// Synthetic multi-class signals: class-specific sinusoid plus optional
/// ECG-like spike train and Gaussian noise.
struct SyntheticSpec {
  std::size_t classes = 3;
  std::size_t samples_per_class = 100;
  std::size_t length = 256;
  std::size_t channels = 1;
  std::vector<double> base_frequencies;  // defaults to 2,4,6,... when empty
  double amplitude_jitter = 0.2;         // amplitude ~ U(1-a, 1+a)
  double phase_jitter = 1.0;             // phase ~ U(-p, p) radians
  double noise_level = 0.1;
  bool ecg_like = false;                 // add spike train with flat baseline
  std::uint64_t seed = 1;

  void validate() const;
};

Dataset gen_synthetic(const SyntheticSpec& spec);

/// CSV row layout: label, then C*L values channel-major. The loader rejects
/// ragged or non-numeric rows with their line numbers.
struct CsvSchema {
  std::size_t channels = 1;
  std::size_t length = 256;
  std::size_t classes = 0;  // 0: infer as max label + 1
};
Dataset load_csv(const std::string& path, const CsvSchema& schema);
void save_csv(const std::string& path, const Dataset& ds);

struct SplitResult {
  Dataset train, test;
};
/// Stratified split; per-class proportions preserved within one sample.
SplitResult split(const Dataset& ds, double train_fraction, std::uint64_t seed);

/// Stratified label subsample of the training set for probe experiments.
Dataset label_subsample(const Dataset& train, double fraction, std::uint64_t seed);

struct NormStats {
  std::vector<double> mean, std;  // per channel
  std::vector<bool> scaled;       // false for zero-variance channels (left unscaled)
};
enum class NormMode { kZScorePerChannel, kNone };
/// Computes stats on ds (the training split) and returns the normalized set.
NormStats normalize_fit(Dataset& ds, NormMode mode);
/// Applies previously fitted (train) stats, e.g. to the test split.
void normalize_apply(Dataset& ds, const NormStats& stats);

struct Batch {
  Tensor signals;            // (B,C,L)
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};
/// Epoch batches in a (seed, epoch)-deterministic shuffled order. With
/// drop_last the final short batch is omitted (contrastive pairing needs a
/// consistent N); evaluation keeps it.
std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                           std::size_t epoch, bool drop_last);

/// JSON manifest recording the generator settings and seed of a dataset.
void write_manifest(const std::string& path, const SyntheticSpec& spec);

}  // namespace leaves
