#pragma once

#include "leaves/tensor.hpp"

namespace leaves {

/// Paired contrastive views: rows 2k and 2k+1 hold the two views of sample
/// k. Row count must be even and at least 4 (two distinct source samples)
/// for the loss denominator to contain any negatives; the degenerate 2-row
/// batch is accepted and yields loss 0.
struct EmbeddingBatch {
  Tensor embeddings;  // (2N, D)
  double temperature = 0.05;
};

/// dot(a,b)/(|a||b|). Errors on a zero-norm vector (collapsed embedding).
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
double cosine_similarity_value(const std::vector<double>& a, const std::vector<double>& b);

/// Rows alternate A_1,B_1,A_2,B_2,...
Tensor interleave_views(const Tensor& views_a, const Tensor& views_b);

/// Normalized-temperature cross entropy over the interleaved batch.
/// Row-max subtraction before exponentiation keeps s/tau stable.
Tensor nt_xent(const EmbeddingBatch& batch);

}  // namespace leaves
