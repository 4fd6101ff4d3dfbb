#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "leaves/contrastive.hpp"
#include "leaves/gradcheck.hpp"
#include "leaves/ops.hpp"
#include "leaves/random.hpp"

using namespace leaves;

namespace {

std::vector<double> rand_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = 2.0 * rng.uniform_open() - 1.0;
  return v;
}

// Independent O(N^2) double-loop evaluation of the loss, row by row.
double brute_force_nt_xent(const std::vector<double>& emb, std::size_t rows, std::size_t d,
                           double tau) {
  auto row = [&](std::size_t i) {
    return std::vector<double>(emb.begin() + static_cast<long>(i * d),
                               emb.begin() + static_cast<long>((i + 1) * d));
  };
  auto ell = [&](std::size_t i, std::size_t j) {
    double denom = 0.0;
    for (std::size_t k = 0; k < rows; ++k) {
      if (k == i) continue;
      denom += std::exp(cosine_similarity_value(row(i), row(k)) / tau);
    }
    const double num = std::exp(cosine_similarity_value(row(i), row(j)) / tau);
    return -std::log(num / denom);
  };
  double total = 0.0;
  for (std::size_t k = 0; k < rows / 2; ++k) total += ell(2 * k, 2 * k + 1) + ell(2 * k + 1, 2 * k);
  return total / static_cast<double>(rows);
}

double loss_of(const std::vector<double>& emb, std::size_t rows, std::size_t d, double tau) {
  Tape tape;
  Tensor e = tape.leaf(Shape{rows, d}, emb, false);
  return nt_xent(EmbeddingBatch{e, tau}).item();
}

}  // namespace

TEST_CASE("cosine similarity values") {
  CHECK(cosine_similarity_value({1, 0}, {1, 0}) == 1.0);
  CHECK(cosine_similarity_value({1, 0}, {0, 1}) == 0.0);
  CHECK(cosine_similarity_value({1, 0}, {-1, 0}) == -1.0);
  CHECK_THROWS_AS(cosine_similarity_value({0, 0}, {1, 0}), DomainError);
}

TEST_CASE("interleave and round trip") {
  Tensor a(Shape{2, 2}, {1, 2, 3, 4});
  Tensor b(Shape{2, 2}, {5, 6, 7, 8});
  Tensor inter = interleave_views(a, b);
  CHECK(inter.values() == std::vector<double>{1, 2, 5, 6, 3, 4, 7, 8});

  Tensor a1(Shape{1, 2}, {1, 2});
  Tensor b1(Shape{1, 2}, {5, 6});
  CHECK(interleave_views(a1, b1).values() == std::vector<double>{1, 2, 5, 6});

  CHECK_THROWS_AS(interleave_views(a, a1), ShapeError);
}

TEST_CASE("degenerate two-row batch yields exactly zero loss") {
  Rng rng(41);
  std::vector<double> emb = rand_vec(rng, 2 * 4);
  CHECK(loss_of(emb, 2, 4, 0.05) == 0.0);
}

TEST_CASE("all-identical N=2 batch yields exactly log 3") {
  std::vector<double> emb;
  for (int i = 0; i < 4; ++i) {
    emb.push_back(0.3);
    emb.push_back(-0.7);
    emb.push_back(0.2);
  }
  CHECK(loss_of(emb, 4, 3, 0.05) == std::log(3.0));
}

TEST_CASE("brute-force oracle over 100 random batches") {
  Rng rng(42);
  int batches = 0;
  for (std::size_t n : {std::size_t{2}, std::size_t{4}, std::size_t{8}}) {
    for (std::size_t d : {std::size_t{4}, std::size_t{16}}) {
      for (int rep = 0; rep < 17 && batches < 100; ++rep, ++batches) {
        std::vector<double> emb = rand_vec(rng, 2 * n * d);
        const double fast = loss_of(emb, 2 * n, d, 0.05);
        const double slow = brute_force_nt_xent(emb, 2 * n, d, 0.05);
        CHECK(std::abs(fast - slow) < 1e-12);
      }
    }
  }
  CHECK(batches == 100);
}

TEST_CASE("loss is non-negative and symmetric under view swap") {
  Rng rng(43);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 3, d = 5;
    std::vector<double> a = rand_vec(rng, n * d), b = rand_vec(rng, n * d);
    Tape t1;
    Tensor l1 = nt_xent(EmbeddingBatch{
        interleave_views(t1.leaf(Shape{n, d}, a, false), t1.leaf(Shape{n, d}, b, false)), 0.05});
    Tape t2;
    Tensor l2 = nt_xent(EmbeddingBatch{
        interleave_views(t2.leaf(Shape{n, d}, b, false), t2.leaf(Shape{n, d}, a, false)), 0.05});
    CHECK(l1.item() >= 0.0);
    CHECK(l1.item() == doctest::Approx(l2.item()).epsilon(1e-12));
  }
}

TEST_CASE("scale invariance of embeddings") {
  Rng rng(44);
  std::vector<double> emb = rand_vec(rng, 8 * 6);
  const double base = loss_of(emb, 8, 6, 0.05);
  std::vector<double> scaled = emb;
  for (double& v : scaled) v *= 37.5;
  CHECK(loss_of(scaled, 8, 6, 0.05) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("errors: odd rows, zero-norm row") {
  Rng rng(45);
  std::vector<double> odd = rand_vec(rng, 3 * 4);
  Tape tape;
  Tensor e = tape.leaf(Shape{3, 4}, odd, false);
  CHECK_THROWS_AS(nt_xent(EmbeddingBatch{e, 0.05}), ShapeError);

  std::vector<double> z = rand_vec(rng, 4 * 4);
  z[4] = z[5] = z[6] = z[7] = 0.0;
  Tape tape2;
  Tensor ez = tape2.leaf(Shape{4, 4}, z, false);
  CHECK_THROWS_AS(nt_xent(EmbeddingBatch{ez, 0.05}), DomainError);
}

TEST_CASE("gradcheck below 1e-6 on N=4 D=8") {
  Rng rng(46);
  std::vector<double> x0 = rand_vec(rng, 8 * 8);
  auto f = [&](const std::vector<double>& x) {
    Tape tape;
    Tensor e = tape.leaf(Shape{8, 8}, x, true);
    return nt_xent(EmbeddingBatch{e, 0.05}).item();
  };
  Tape tape;
  Tensor e = tape.leaf(Shape{8, 8}, x0, true);
  Tensor loss = nt_xent(EmbeddingBatch{e, 0.05});
  tape.backward(loss);
  CHECK(grad_check(f, x0, e.grad(), 1e-6).max_rel_error < 1e-6);
}
