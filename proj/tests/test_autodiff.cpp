#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "leaves/gradcheck.hpp"
#include "leaves/ops.hpp"
#include "leaves/random.hpp"
#include "leaves/tensor.hpp"

using namespace leaves;

namespace {
std::vector<double> rand_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform_open();
  return v;
}
}  // namespace

TEST_CASE("elementwise arithmetic") {
  Tensor a(Shape{2}, {1.0, 2.0});
  Tensor b(Shape{2}, {3.0, 4.0});
  CHECK(add(a, b).values() == std::vector<double>{4.0, 6.0});

  Tensor c(Shape{3}, {1.0, 2.0, 3.0});
  CHECK(mul(c, 0.0).values() == std::vector<double>{0.0, 0.0, 0.0});

  Tensor z(Shape{2}, {1.0, 0.0});
  CHECK_THROWS_AS(divide(a, z), DomainError);
}

TEST_CASE("broadcasting shapes and errors") {
  Tensor a(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b(Shape{3}, {10, 20, 30});
  Tensor out = add(a, b);
  CHECK(out.shape() == Shape{2, 3});
  CHECK(out.values() == std::vector<double>{11, 22, 33, 14, 25, 36});

  Tensor bad(Shape{2}, {1, 2});
  CHECK_THROWS_AS(add(a, bad), ShapeError);
  try {
    add(a, bad);
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(2)") != std::string::npos);
  }
}

TEST_CASE("broadcast gradient sums over stretched axes") {
  Tape tape;
  Tensor a = tape.leaf(Shape{2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor b = tape.leaf(Shape{1, 3}, {1, 1, 1}, true);
  Tensor loss = sum(mul(a, b));
  tape.backward(loss);
  CHECK(b.grad() == std::vector<double>{1 + 4, 2 + 5, 3 + 6});
}

TEST_CASE("unary maps") {
  CHECK(exp(Tensor(Shape{1}, {0.0})).values()[0] == 1.0);
  CHECK(relu(Tensor(Shape{2}, {-1.0, 2.0})).values() == std::vector<double>{0.0, 2.0});
  CHECK(logistic(Tensor(Shape{1}, {0.0})).values()[0] == 0.5);

  CHECK_THROWS_AS(log(Tensor(Shape{1}, {0.0})), DomainError);
  CHECK_THROWS_AS(sqrt(Tensor(Shape{1}, {-1.0})), DomainError);
  try {
    log(Tensor(Shape{2}, {1.0, -3.0}));
  } catch (const DomainError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);  // offending index
  }
}

TEST_CASE("reductions") {
  Tensor a(Shape{2, 2}, {1, 2, 3, 4});
  CHECK(sum(a, 1).values() == std::vector<double>{3, 7});
  CHECK(mean(Tensor(Shape{2}, {2, 4})).item() == 3.0);
  CHECK_THROWS_AS(sum(a, 2), ShapeError);
}

TEST_CASE("max routes gradient to the first occurrence on ties") {
  Tape tape;
  Tensor x = tape.leaf(Shape{2}, {1.0, 1.0}, true);
  Tensor loss = max(x);
  tape.backward(loss);
  CHECK(x.grad() == std::vector<double>{1.0, 0.0});
}

TEST_CASE("matmul basics") {
  Tensor eye(Shape{2, 2}, {1, 0, 0, 1});
  Tensor col(Shape{2, 1}, {1, 2});
  CHECK(matmul(eye, col).values() == std::vector<double>{1, 2});

  Tensor r(Shape{1, 2}, {1, 2});
  Tensor c(Shape{2, 1}, {3, 4});
  CHECK(matmul(r, c).values() == std::vector<double>{11});

  CHECK_THROWS_AS(matmul(r, r), ShapeError);
}

TEST_CASE("matmul gradcheck 3x4 by 4x2") {
  Rng rng(31);
  std::vector<double> x0 = rand_vec(rng, 12 + 8, -1.0, 1.0);
  std::vector<double> w = rand_vec(rng, 6, -1.0, 1.0);
  auto build = [&](Tape& tape, const std::vector<double>& x) {
    Tensor xall = tape.leaf(Shape{20}, x, true);
    std::vector<std::size_t> ia(12), ib(8);
    for (std::size_t i = 0; i < 12; ++i) ia[i] = i;
    for (std::size_t i = 0; i < 8; ++i) ib[i] = 12 + i;
    Tensor a = reshape(gather_lastaxis(xall, ia), Shape{3, 4});
    Tensor b = reshape(gather_lastaxis(xall, ib), Shape{4, 2});
    return sum(mul(matmul(a, b), Tensor(Shape{3, 2}, w)));
  };
  auto f = [&](const std::vector<double>& x) {
    Tape tape;
    return build(tape, x).item();
  };
  Tape tape;
  Tensor loss = build(tape, x0);
  tape.backward(loss);
  CHECK(grad_check(f, x0, tape.grad_of(0), 1e-5).max_rel_error < 1e-6);
}

TEST_CASE("conv1d values") {
  Tensor x(Shape{1, 1, 3}, {1, 2, 3});
  Tensor w(Shape{1, 1, 3}, {0, 1, 0});
  CHECK(conv1d(x, w, 1, 1).values() == std::vector<double>{1, 2, 3});

  Tensor x2(Shape{1, 1, 4}, {1, 1, 1, 1});
  Tensor w2(Shape{1, 1, 2}, {1, 1});
  Tensor y2 = conv1d(x2, w2, 2, 0);
  CHECK(y2.values() == std::vector<double>{2, 2});

  Tensor wide(Shape{1, 1, 9}, std::vector<double>(9, 1.0));
  CHECK_THROWS_AS(conv1d(x, wide, 1, 1), ShapeError);
}

TEST_CASE("conv1d gradcheck N=2 C=2 L=8 k=3") {
  Rng rng(32);
  const std::size_t nx = 2 * 2 * 8, nw = 2 * 2 * 3;
  std::vector<double> x0 = rand_vec(rng, nx + nw, -1.0, 1.0);
  Tensor wsum;
  auto build = [&](Tape& tape, const std::vector<double>& x) {
    Tensor xall = tape.leaf(Shape{nx + nw}, x, true);
    std::vector<std::size_t> ix(nx), iw(nw);
    for (std::size_t i = 0; i < nx; ++i) ix[i] = i;
    for (std::size_t i = 0; i < nw; ++i) iw[i] = nx + i;
    Tensor sig = reshape(gather_lastaxis(xall, ix), Shape{2, 2, 8});
    Tensor ker = reshape(gather_lastaxis(xall, iw), Shape{2, 2, 3});
    return mean(conv1d(sig, ker, 1, 1));
  };
  auto f = [&](const std::vector<double>& x) {
    Tape tape;
    return build(tape, x).item();
  };
  Tape tape;
  Tensor loss = build(tape, x0);
  tape.backward(loss);
  CHECK(grad_check(f, x0, tape.grad_of(0), 1e-5).max_rel_error < 1e-6);
}

TEST_CASE("interp1d endpoint mapping and midpoint") {
  Tensor sig(Shape{1, 4}, {0, 1, 2, 3});
  Tensor mid(Shape{1, 1}, {0.0});
  CHECK(interp1d(sig, mid).values()[0] == doctest::Approx(1.5).epsilon(1e-15));
  Tensor ends(Shape{1, 2}, {-1.0, 1.0});
  Tensor out = interp1d(sig, ends);
  CHECK(out.values()[0] == 0.0);
  CHECK(out.values()[1] == 3.0);
}

TEST_CASE("interp1d clamps out-of-range locations with zero gradient") {
  Tape tape;
  Tensor sig = tape.leaf(Shape{1, 4}, {0, 1, 2, 3}, false);
  Tensor loc = tape.leaf(Shape{1, 2}, {-2.0, 1.7}, true);
  Tensor out = interp1d(sig, loc);
  CHECK(out.values()[0] == 0.0);
  CHECK(out.values()[1] == 3.0);
  tape.backward(sum(out));
  CHECK(loc.grad() == std::vector<double>{0.0, 0.0});
}

TEST_CASE("interp1d gradcheck w.r.t. locations on L=16") {
  Rng rng(33);
  std::vector<double> sig_vals = rand_vec(rng, 16, -1.0, 1.0);
  std::vector<double> x0 = rand_vec(rng, 6, -0.9, 0.9);
  auto build = [&](Tape& tape, const std::vector<double>& x) {
    Tensor loc = tape.leaf(Shape{1, 6}, x, true);
    Tensor sig = tape.leaf(Shape{1, 16}, sig_vals, false);
    return sum(interp1d(sig, loc));
  };
  auto f = [&](const std::vector<double>& x) {
    Tape tape;
    return build(tape, x).item();
  };
  Tape tape;
  Tensor loss = build(tape, x0);
  tape.backward(loss);
  CHECK(grad_check(f, x0, tape.grad_of(0), 1e-6).max_rel_error < 1e-5);
}

TEST_CASE("sort_lastaxis values and permutation") {
  SortResult r = sort_lastaxis(Tensor(Shape{3}, {3, 1, 2}));
  CHECK(r.sorted.values() == std::vector<double>{1, 2, 3});
  CHECK(r.perm == std::vector<std::size_t>{1, 2, 0});

  SortResult s = sort_lastaxis(Tensor(Shape{3}, {1, 2, 3}));
  CHECK(s.perm == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("sort backward conserves gradient mass") {
  Rng rng(34);
  std::vector<double> x0 = rand_vec(rng, 8, -2.0, 2.0);
  std::vector<double> w = rand_vec(rng, 8, -1.0, 1.0);
  Tape tape;
  Tensor x = tape.leaf(Shape{2, 4}, x0, true);
  Tensor loss = sum(mul(sort_lastaxis(x).sorted, Tensor(Shape{2, 4}, w)));
  tape.backward(loss);
  double gin = 0.0, gout = 0.0;
  for (double g : x.grad()) gin += g;
  for (double g : w) gout += g;
  CHECK(gin == doctest::Approx(gout).epsilon(1e-12));
}

TEST_CASE("backward basics") {
  Tape tape;
  Tensor x = tape.leaf(Shape{3}, {5, -2, 7}, true);
  Tensor loss = sum(x);
  tape.backward(loss);
  CHECK(x.grad() == std::vector<double>{1, 1, 1});

  Tape tape2;
  Tensor y = tape2.leaf(Shape{2}, {1, 2}, true);
  Tensor loss2 = sum(mul(y, y));
  tape2.backward(loss2);
  CHECK(y.grad() == std::vector<double>{2, 4});
}

TEST_CASE("backward errors") {
  Tape tape;
  Tensor x = tape.leaf(Shape{2}, {1, 2}, true);
  Tensor y = mul(x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);  // non-scalar loss

  Tensor loss = sum(y);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), UsageError);  // second backward
}

TEST_CASE("grad_check oracle sanity") {
  auto ident = [](const std::vector<double>& x) { return x[0]; };
  CHECK(grad_check(ident, {0.3}, {1.0}, 1e-5).max_rel_error < 1e-10);

  auto fexp = [](const std::vector<double>& x) { return std::exp(x[0]); };
  CHECK(grad_check(fexp, {0.0}, {1.0}, 1e-5).max_rel_error < 1e-8);
}

TEST_CASE("tape determinism: identical runs produce identical gradients") {
  Rng rng(35);
  std::vector<double> x0 = rand_vec(rng, 12, -1.0, 1.0);
  auto run = [&]() {
    Tape tape;
    Tensor x = tape.leaf(Shape{3, 4}, x0, true);
    Tensor loss = mean(mul(tanh(x), exp(mul(x, 0.3))));
    tape.backward(loss);
    return x.grad();
  };
  CHECK(run() == run());
}
