#include "leaves/encoder.hpp"

#include <cmath>

#include "leaves/ops.hpp"
#include "leaves/random.hpp"

namespace leaves {

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

std::vector<double> fan_in_uniform(Rng& rng, std::size_t count, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(count);
  for (auto& x : v) x = (2.0 * rng.uniform_open() - 1.0) * bound;
  return v;
}
}  // namespace

void EncoderConfig::validate() const {
  if (channels_in < 1 || projection_dim < 1 || num_classes < 1 || block_widths.empty())
    throw UsageError("encoder config dims must all be >= 1");
  for (std::size_t w : block_widths)
    if (w < 1) throw UsageError("encoder block width must be >= 1");
  if (projection_dim > embedding_dim())
    throw UsageError("projection dim must not exceed embedding dim");
  if (stem_kernel < 1 || block_kernel < 1) throw UsageError("kernel sizes must be >= 1");
}

Encoder::Encoder(EncoderConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(init_seed);

  auto add_bn = [&](const std::string& prefix, std::size_t width) {
    BnIdx idx;
    idx.gamma = store_.add(prefix + ".gamma", Shape{width}, 1.0);
    idx.beta = store_.add(prefix + ".beta", Shape{width}, 0.0);
    idx.running_mean = store_.add(prefix + ".running_mean", Shape{width}, 0.0, false);
    idx.running_var = store_.add(prefix + ".running_var", Shape{width}, 1.0, false);
    return idx;
  };
  auto add_conv = [&](const std::string& name, std::size_t out_w, std::size_t in_w,
                      std::size_t k) {
    return store_.add(name, Shape{out_w, in_w, k},
                      fan_in_uniform(rng, out_w * in_w * k, in_w * k));
  };

  const std::size_t w0 = config_.block_widths.front();
  stem_conv_ = add_conv("stem.conv", w0, config_.channels_in, config_.stem_kernel);
  stem_bn_ = add_bn("stem.bn", w0);

  std::size_t in_w = w0;
  for (std::size_t b = 0; b < config_.block_widths.size(); ++b) {
    const std::size_t out_w = config_.block_widths[b];
    const std::string p = "block" + std::to_string(b);
    BlockIdx idx;
    idx.stride = (out_w == in_w) ? 1 : 2;
    idx.conv1 = add_conv(p + ".conv1", out_w, in_w, config_.block_kernel);
    idx.bn1 = add_bn(p + ".bn1", out_w);
    idx.conv2 = add_conv(p + ".conv2", out_w, out_w, config_.block_kernel);
    idx.bn2 = add_bn(p + ".bn2", out_w);
    if (out_w != in_w) {
      idx.has_skip = true;
      idx.skip_conv = add_conv(p + ".skip", out_w, in_w, 1);
      idx.skip_bn = add_bn(p + ".skip_bn", out_w);
    }
    blocks_.push_back(idx);
    in_w = out_w;
  }

  const std::size_t d = config_.embedding_dim();
  const std::size_t pdim = config_.projection_dim;
  proj_w1_ = store_.add("proj.w1", Shape{d, d}, fan_in_uniform(rng, d * d, d));
  proj_b1_ = store_.add("proj.b1", Shape{d}, 0.0);
  proj_w2_ = store_.add("proj.w2", Shape{d, pdim}, fan_in_uniform(rng, d * pdim, d));
  proj_b2_ = store_.add("proj.b2", Shape{pdim}, 0.0);
  probe_w_ = store_.add("probe.w", Shape{d, config_.num_classes}, 0.0);
  probe_b_ = store_.add("probe.b", Shape{config_.num_classes}, 0.0);
}

std::size_t Encoder::min_input_length() const {
  std::size_t strides = 2;  // stem
  std::size_t in_w = config_.block_widths.front();
  for (std::size_t w : config_.block_widths) {
    if (w != in_w) strides *= 2;
    in_w = w;
  }
  return strides;
}

std::vector<Tensor> Encoder::attach(Tape& tape, bool requires_grad) const {
  std::vector<Tensor> leaves(store_.count());
  for (std::size_t i = 0; i < store_.count(); ++i) {
    if (!store_[i].trainable) continue;  // running stats stay off the tape
    leaves[i] = tape.leaf(store_[i].shape, store_[i].value, requires_grad);
  }
  return leaves;
}

Tensor Encoder::batch_norm(const Tensor& x, const BnIdx& idx, const std::vector<Tensor>& leaves,
                           bool training) {
  const std::size_t c = x.dim(1);
  Tensor mean_c, var_c;
  if (training) {
    Tensor m = mean(mean(x, 0), 1);                   // (C) batch mean
    Tensor m2 = mean(mean(mul(x, x), 0), 1);          // (C) batch second moment
    var_c = sub(m2, mul(m, m));
    mean_c = m;
    // Refresh running averages with the detached batch statistics.
    auto& rm = store_[idx.running_mean].value;
    auto& rv = store_[idx.running_var].value;
    const std::size_t n_elems = x.dim(0) * x.dim(2);
    const double unbias = n_elems > 1 ? static_cast<double>(n_elems) /
                                            static_cast<double>(n_elems - 1)
                                      : 1.0;
    for (std::size_t i = 0; i < c; ++i) {
      rm[i] = (1.0 - kBnMomentum) * rm[i] + kBnMomentum * mean_c.values()[i];
      rv[i] = (1.0 - kBnMomentum) * rv[i] + kBnMomentum * var_c.values()[i] * unbias;
    }
  } else {
    mean_c = Tensor(Shape{c}, store_[idx.running_mean].value);
    var_c = Tensor(Shape{c}, store_[idx.running_var].value);
  }
  Tensor centered = sub(x, reshape(mean_c, {c, 1}));
  Tensor denom = sqrt(add(var_c, kBnEps));
  Tensor normed = divide(centered, reshape(denom, {c, 1}));
  Tensor gamma = reshape(leaves[idx.gamma], {c, 1});
  Tensor beta = reshape(leaves[idx.beta], {c, 1});
  return add(mul(normed, gamma), beta);
}

Tensor Encoder::encoder_forward(const Tensor& x, const std::vector<Tensor>& leaves,
                                bool training) {
  if (x.rank() != 3) throw ShapeError("encoder input must be (N,C,L)");
  if (x.dim(1) != config_.channels_in)
    throw ShapeError("encoder expects " + std::to_string(config_.channels_in) + " channels, got " +
                     std::to_string(x.dim(1)));
  if (x.dim(2) < min_input_length())
    throw UsageError("input too short: length " + std::to_string(x.dim(2)) + " < minimum " +
                     std::to_string(min_input_length()));

  Tensor h = conv1d(x, leaves[stem_conv_], 2, config_.stem_kernel / 2);
  h = relu(batch_norm(h, stem_bn_, leaves, training));

  for (const BlockIdx& blk : blocks_) {
    Tensor branch = conv1d(h, leaves[blk.conv1], blk.stride, config_.block_kernel / 2);
    branch = relu(batch_norm(branch, blk.bn1, leaves, training));
    branch = conv1d(branch, leaves[blk.conv2], 1, config_.block_kernel / 2);
    branch = batch_norm(branch, blk.bn2, leaves, training);

    Tensor skip = h;
    if (blk.has_skip) {
      skip = conv1d(h, leaves[blk.skip_conv], blk.stride, 0);
      skip = batch_norm(skip, blk.skip_bn, leaves, training);
    }
    h = relu(add(branch, skip));
  }
  return mean(h, 2);  // global average pool -> (N, D)
}

Tensor Encoder::dense(const Tensor& z, std::size_t w_idx, std::size_t b_idx,
                      const std::vector<Tensor>& leaves) const {
  const std::size_t out_dim = store_[w_idx].shape[1];
  return add(matmul(z, leaves[w_idx]), reshape(leaves[b_idx], {1, out_dim}));
}

Tensor Encoder::projection_forward(const Tensor& z, const std::vector<Tensor>& leaves) const {
  Tensor h = relu(dense(z, proj_w1_, proj_b1_, leaves));
  return dense(h, proj_w2_, proj_b2_, leaves);
}

Tensor Encoder::probe_forward(const Tensor& z, const std::vector<Tensor>& leaves) const {
  return dense(z, probe_w_, probe_b_, leaves);
}

}  // namespace leaves
