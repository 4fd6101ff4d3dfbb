#include "leaves/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "leaves/random.hpp"

namespace leaves {

namespace {

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  const std::size_t c = ds.channels(), l = ds.length();
  std::vector<double> values(indices.size() * c * l);
  std::vector<int> labels(indices.size());
  const auto& src = ds.signals.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(indices[i] * c * l), c * l,
                values.begin() + static_cast<std::ptrdiff_t>(i * c * l));
    labels[i] = ds.labels[indices[i]];
  }
  Dataset out;
  out.signals = Tensor({indices.size(), c, l}, std::move(values));
  out.labels = std::move(labels);
  out.classes = ds.classes;
  out.channel_names = ds.channel_names;
  return out;
}

std::vector<std::vector<std::size_t>> by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> groups(ds.classes);
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    groups[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  return groups;
}

}  // namespace

void Dataset::validate() const {
  if (signals.rank() != 3) throw ShapeError("dataset signals must be (N,C,L)");
  if (labels.size() != size()) throw ShapeError("dataset label count does not match sample count");
  for (int lab : labels)
    if (lab < 0 || static_cast<std::size_t>(lab) >= classes)
      throw DomainError("label " + std::to_string(lab) + " outside [0," +
                        std::to_string(classes) + ")");
  for (double v : signals.values())
    if (!std::isfinite(v)) throw DomainError("dataset contains a non-finite signal value");
}

void SyntheticSpec::validate() const {
  if (classes < 1 || samples_per_class < 1 || length < 2 || channels < 1)
    throw UsageError("invalid synthetic spec dimensions");
  if (!base_frequencies.empty()) {
    if (base_frequencies.size() != classes)
      throw UsageError("base_frequencies must have one entry per class");
    for (std::size_t i = 0; i < base_frequencies.size(); ++i)
      for (std::size_t j = i + 1; j < base_frequencies.size(); ++j)
        if (base_frequencies[i] == base_frequencies[j])
          throw UsageError("base frequencies must be distinct across classes");
  }
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<double> freqs = spec.base_frequencies;
  if (freqs.empty()) {
    freqs.resize(spec.classes);
    for (std::size_t c = 0; c < spec.classes; ++c) freqs[c] = 2.0 * static_cast<double>(c + 1);
  }

  Rng rng(spec.seed);
  const std::size_t n = spec.classes * spec.samples_per_class;
  const std::size_t len = spec.length;
  std::vector<double> values(n * spec.channels * len, 0.0);
  std::vector<int> labels(n);

  std::size_t sample = 0;
  for (std::size_t cls = 0; cls < spec.classes; ++cls) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++sample) {
      labels[sample] = static_cast<int>(cls);
      for (std::size_t ch = 0; ch < spec.channels; ++ch) {
        const double amp =
            1.0 + spec.amplitude_jitter * (2.0 * rng.uniform_open() - 1.0);
        const double phase = spec.phase_jitter * (2.0 * rng.uniform_open() - 1.0);
        const double freq = freqs[cls];
        double* row = values.data() + (sample * spec.channels + ch) * len;
        for (std::size_t t = 0; t < len; ++t) {
          const double u = static_cast<double>(t) / static_cast<double>(len);
          row[t] = amp * std::sin(2.0 * M_PI * freq * u + phase);
        }
        if (spec.ecg_like) {
          // Quasi-periodic narrow bumps over a flat baseline between beats.
          const double period = static_cast<double>(len) / freq;
          const double beat_jitter = 0.1 * period * (2.0 * rng.uniform_open() - 1.0);
          for (double center = 0.25 * period + beat_jitter;
               center < static_cast<double>(len); center += period) {
            for (std::size_t t = 0; t < len; ++t) {
              const double d = (static_cast<double>(t) - center) / 2.0;
              row[t] += 1.5 * std::exp(-0.5 * d * d);
            }
          }
        }
        if (spec.noise_level > 0.0) {
          for (std::size_t t = 0; t < len; ++t) row[t] += spec.noise_level * rng.normal();
        }
      }
    }
  }

  Dataset ds;
  ds.signals = Tensor({n, spec.channels, len}, std::move(values));
  ds.labels = std::move(labels);
  ds.classes = spec.classes;
  for (std::size_t ch = 0; ch < spec.channels; ++ch)
    ds.channel_names.push_back("ch" + std::to_string(ch));
  ds.validate();
  return ds;
}

void save_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open " + path + " for writing");
  out << "# label then C*L values channel-major; C=" << ds.channels() << " L=" << ds.length()
      << " classes=" << ds.classes << '\n';
  char buf[32];
  const std::size_t row_len = ds.channels() * ds.length();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (std::size_t j = 0; j < row_len; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.signals.at(i * row_len + j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open dataset file: " + path);
  const std::size_t row_len = schema.channels * schema.length;

  std::vector<double> values;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream row(line);
    std::string field;
    std::vector<double> parsed;
    while (std::getline(row, field, ',')) {
      std::size_t consumed = 0;
      double v;
      try {
        v = std::stod(field, &consumed);
      } catch (const std::exception&) {
        throw DomainError("non-numeric field '" + field + "' at line " + std::to_string(line_no));
      }
      while (consumed < field.size() && std::isspace(static_cast<unsigned char>(field[consumed])))
        ++consumed;
      if (consumed != field.size())
        throw DomainError("non-numeric field '" + field + "' at line " + std::to_string(line_no));
      parsed.push_back(v);
    }
    if (parsed.size() != row_len + 1)
      throw DomainError("line " + std::to_string(line_no) + " has " +
                        std::to_string(parsed.size() ? parsed.size() - 1 : 0) +
                        " values, expected " + std::to_string(row_len));
    const double raw_label = parsed[0];
    if (raw_label != std::floor(raw_label) || raw_label < 0)
      throw DomainError("label at line " + std::to_string(line_no) + " is not a non-negative integer");
    const int label = static_cast<int>(raw_label);
    if (schema.classes > 0 && static_cast<std::size_t>(label) >= schema.classes)
      throw DomainError("label " + std::to_string(label) + " at line " + std::to_string(line_no) +
                        " outside declared range [0," + std::to_string(schema.classes) + ")");
    labels.push_back(label);
    max_label = std::max(max_label, label);
    values.insert(values.end(), parsed.begin() + 1, parsed.end());
  }
  if (labels.empty()) throw DomainError("no data rows in " + path);

  Dataset ds;
  ds.signals = Tensor({labels.size(), schema.channels, schema.length}, std::move(values));
  ds.labels = std::move(labels);
  ds.classes = schema.classes > 0 ? schema.classes : static_cast<std::size_t>(max_label + 1);
  for (std::size_t ch = 0; ch < schema.channels; ++ch)
    ds.channel_names.push_back("ch" + std::to_string(ch));
  ds.validate();
  return ds;
}

SplitResult split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (train_fraction < 0.0 || train_fraction > 1.0)
    throw UsageError("train fraction must lie in [0,1]");
  ds.validate();
  Rng rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (auto& group : by_class(ds)) {
    if (train_fraction > 0.0 && train_fraction < 1.0 && group.size() < 2)
      throw UsageError("a class has fewer than 2 samples; cannot fill both splits");
    auto order = rng.permutation(group.size());
    const std::size_t n_train =
        static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(group.size())));
    for (std::size_t i = 0; i < group.size(); ++i) {
      (i < n_train ? train_idx : test_idx).push_back(group[order[i]]);
    }
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return SplitResult{subset(ds, train_idx), subset(ds, test_idx)};
}

Dataset label_subsample(const Dataset& train, double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) throw UsageError("label fraction must lie in (0,1]");
  Rng rng(seed);
  std::vector<std::size_t> keep;
  for (auto& group : by_class(train)) {
    auto order = rng.permutation(group.size());
    std::size_t n_keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(group.size()))));
    n_keep = std::min(n_keep, group.size());
    for (std::size_t i = 0; i < n_keep; ++i) keep.push_back(group[order[i]]);
  }
  std::sort(keep.begin(), keep.end());
  return subset(train, keep);
}

NormStats normalize_fit(Dataset& ds, NormMode mode) {
  const std::size_t c = ds.channels(), l = ds.length(), n = ds.size();
  NormStats stats;
  stats.mean.assign(c, 0.0);
  stats.std.assign(c, 1.0);
  stats.scaled.assign(c, false);
  if (mode == NormMode::kNone) return stats;

  const auto& v = ds.signals.values();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < l; ++t) m += v[(i * c + ch) * l + t];
    m /= static_cast<double>(n * l);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < l; ++t) {
        const double d = v[(i * c + ch) * l + t] - m;
        var += d * d;
      }
    var /= static_cast<double>(n * l);
    const double sd = std::sqrt(var);
    if (sd < 1e-12) {
      std::cerr << "warning: channel " << ch << " has zero variance, left unscaled\n";
      stats.mean[ch] = 0.0;
      stats.std[ch] = 1.0;
      stats.scaled[ch] = false;
    } else {
      stats.mean[ch] = m;
      stats.std[ch] = sd;
      stats.scaled[ch] = true;
    }
  }
  normalize_apply(ds, stats);
  return stats;
}

void normalize_apply(Dataset& ds, const NormStats& stats) {
  const std::size_t c = ds.channels(), l = ds.length(), n = ds.size();
  if (stats.mean.size() != c) throw ShapeError("normalization stats channel count mismatch");
  std::vector<double> v = ds.signals.values();
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (!stats.scaled[ch]) continue;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < l; ++t) {
        double& x = v[(i * c + ch) * l + t];
        x = (x - stats.mean[ch]) / stats.std[ch];
      }
  }
  ds.signals = Tensor(ds.signals.shape(), std::move(v));
}

std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed,
                           std::size_t epoch, bool drop_last) {
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  // Shuffle order is a function of (seed, epoch) only.
  Rng rng(seed + 0x9e3779b97f4a7c15ULL * (epoch + 1));
  auto order = rng.permutation(ds.size());

  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    if (drop_last && count < batch_size) break;
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(start + count));
    Dataset sub = subset(ds, idx);
    out.push_back(Batch{std::move(sub.signals), std::move(sub.labels), std::move(idx)});
  }
  return out;
}

void write_manifest(const std::string& path, const SyntheticSpec& spec) {
  nlohmann::json j;
  j["type"] = "synthetic";
  j["classes"] = spec.classes;
  j["samples_per_class"] = spec.samples_per_class;
  j["length"] = spec.length;
  j["channels"] = spec.channels;
  j["base_frequencies"] = spec.base_frequencies;
  j["amplitude_jitter"] = spec.amplitude_jitter;
  j["phase_jitter"] = spec.phase_jitter;
  j["noise_level"] = spec.noise_level;
  j["ecg_like"] = spec.ecg_like;
  j["seed"] = spec.seed;
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace leaves
