#pragma once

#include <cstdint>
#include <vector>

#include "leaves/params.hpp"
#include "leaves/tensor.hpp"

namespace leaves {

/// Desk-scale residual 1-D conv stack: strided stem, one residual block per
/// width, global average pooling. The embedding dim equals the last width.
struct EncoderConfig {
  std::size_t channels_in = 1;
  std::vector<std::size_t> block_widths{16, 32, 64};
  std::size_t stem_kernel = 7;
  std::size_t block_kernel = 3;
  std::size_t projection_dim = 32;
  std::size_t num_classes = 3;

  std::size_t embedding_dim() const { return block_widths.back(); }
  void validate() const;
};

class Encoder {
 public:
  Encoder(EncoderConfig config, std::uint64_t init_seed);

  const EncoderConfig& config() const { return config_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  /// Shortest input the configured stack accepts (product of strides).
  std::size_t min_input_length() const;

  /// One leaf per trainable store entry, indexed by store position.
  /// Batch-norm running statistics stay plain state and never join a tape.
  std::vector<Tensor> attach(Tape& tape, bool requires_grad = true) const;

  /// x (N,C,L) -> embeddings (N,D). Training mode normalizes with batch
  /// statistics and refreshes the running averages; eval mode uses the
  /// stored running averages. No stochastic layers.
  Tensor encoder_forward(const Tensor& x, const std::vector<Tensor>& leaves, bool training);

  /// Two dense layers with relu between, (N,D) -> (N,P). Pretraining only.
  Tensor projection_forward(const Tensor& z, const std::vector<Tensor>& leaves) const;

  /// Linear probe, (N,D) -> logits (N,classes).
  Tensor probe_forward(const Tensor& z, const std::vector<Tensor>& leaves) const;

 private:
  struct BnIdx {
    std::size_t gamma, beta, running_mean, running_var;
  };
  struct BlockIdx {
    std::size_t conv1, conv2;
    BnIdx bn1, bn2;
    bool has_skip = false;
    std::size_t skip_conv = 0;
    BnIdx skip_bn{};
    std::size_t stride = 1;
  };

  Tensor batch_norm(const Tensor& x, const BnIdx& idx, const std::vector<Tensor>& leaves,
                    bool training);
  Tensor dense(const Tensor& z, std::size_t w_idx, std::size_t b_idx,
               const std::vector<Tensor>& leaves) const;

  EncoderConfig config_;
  ParamStore store_;
  std::size_t stem_conv_;
  BnIdx stem_bn_{};
  std::vector<BlockIdx> blocks_;
  std::size_t proj_w1_, proj_b1_, proj_w2_, proj_b2_;
  std::size_t probe_w_, probe_b_;
};

}  // namespace leaves
