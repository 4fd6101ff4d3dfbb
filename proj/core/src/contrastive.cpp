#include "leaves/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "leaves/ops.hpp"

namespace leaves {

double cosine_similarity_value(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw DomainError("cosine_similarity: zero-norm vector (collapsed embedding)");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size())
    throw ShapeError("cosine_similarity requires two rank-1 tensors of equal length");
  // Domain check on values before building the graph.
  cosine_similarity_value(a.values(), b.values());
  Tensor dot = sum(mul(a, b));
  Tensor norm_a = sqrt(sum(mul(a, a)));
  Tensor norm_b = sqrt(sum(mul(b, b)));
  return divide(dot, mul(norm_a, norm_b));
}

Tensor interleave_views(const Tensor& views_a, const Tensor& views_b) {
  if (views_a.rank() != 2 || views_a.shape() != views_b.shape())
    throw ShapeError("interleave_views requires equal (N,D) shapes, got " +
                     shape_str(views_a.shape()) + " and " + shape_str(views_b.shape()));
  const std::size_t n = views_a.dim(0), d = views_a.dim(1);
  const auto& va = views_a.values();
  const auto& vb = views_b.values();
  std::vector<double> out(2 * n * d);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < d; ++j) {
      out[(2 * k) * d + j] = va[k * d + j];
      out[(2 * k + 1) * d + j] = vb[k * d + j];
    }
  if (!views_a.on_tape() && !views_b.on_tape())
    return Tensor({2 * n, d}, std::move(out));
  if (views_a.on_tape() && views_b.on_tape() && views_a.tape() != views_b.tape())
    throw UsageError("interleave_views: operands on different tapes");
  Tape* tape = views_a.on_tape() ? views_a.tape() : views_b.tape();
  std::vector<int> inputs;
  if (views_a.on_tape()) inputs.push_back(views_a.node());
  if (views_b.on_tape()) inputs.push_back(views_b.node());
  const int na = views_a.on_tape() ? views_a.node() : -1;
  const int nb = views_b.on_tape() ? views_b.node() : -1;
  return tape->record({2 * n, d}, std::move(out), std::move(inputs),
                      [na, nb, n, d](const std::vector<double>& g, Tape& t) {
                        for (std::size_t k = 0; k < n; ++k)
                          for (std::size_t j = 0; j < d; ++j) {
                            if (na >= 0 && t.node_requires_grad(na))
                              t.accumulate(na, k * d + j, g[(2 * k) * d + j]);
                            if (nb >= 0 && t.node_requires_grad(nb))
                              t.accumulate(nb, k * d + j, g[(2 * k + 1) * d + j]);
                          }
                      });
}

Tensor nt_xent(const EmbeddingBatch& batch) {
  const Tensor& z = batch.embeddings;
  if (z.rank() != 2) throw ShapeError("nt_xent expects (2N, D) embeddings");
  const std::size_t rows = z.dim(0), d = z.dim(1);
  if (rows < 2 || rows % 2 != 0)
    throw ShapeError("nt_xent requires an even row count >= 2, got " + std::to_string(rows));
  if (batch.temperature <= 0.0) throw DomainError("nt_xent temperature must be > 0");

  // Row norms; a zero norm means a collapsed embedding.
  Tensor sq_sums = sum(mul(z, z), 1);  // (2N)
  for (double v : sq_sums.values())
    if (v == 0.0) throw DomainError("nt_xent: zero-norm embedding row (collapsed embedding)");
  Tensor zn = divide(z, reshape(sqrt(sq_sums), {rows, 1}));

  Tensor sims = matmul(zn, transpose2d(zn));          // (2N, 2N) cosine similarities
  Tensor logits = divide(sims, batch.temperature);

  // Self-similarity excluded from every denominator.
  std::vector<double> diag_mask(rows * rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) diag_mask[i * rows + i] = -1e9;
  Tensor masked = add(logits, Tensor({rows, rows}, std::move(diag_mask)));

  // Row-max shift: constant w.r.t. the graph, mathematically a no-op.
  std::vector<double> row_max(rows, -1e300);
  const auto& mv = masked.values();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < rows; ++j) row_max[i] = std::max(row_max[i], mv[i * rows + j]);
  Tensor shift = Tensor({rows, 1}, row_max);

  Tensor shifted = sub(masked, shift);
  Tensor lse = log(sum(exp(shifted), 1));  // (2N), log-sum-exp minus the shift

  // Positive logit per row, in the same shifted frame: partner of row 2k is
  // 2k+1 and vice versa.
  std::vector<double> pos_mask(rows * rows, 0.0);
  for (std::size_t k = 0; k < rows / 2; ++k) {
    pos_mask[(2 * k) * rows + (2 * k + 1)] = 1.0;
    pos_mask[(2 * k + 1) * rows + (2 * k)] = 1.0;
  }
  Tensor pos_shifted = sum(mul(shifted, Tensor({rows, rows}, std::move(pos_mask))), 1);

  Tensor per_row = sub(lse, pos_shifted);
  return divide(sum(per_row), static_cast<double>(rows));
}

}  // namespace leaves
