#include <benchmark/benchmark.h>

#include "leaves/augment.hpp"
#include "leaves/contrastive.hpp"
#include "leaves/encoder.hpp"
#include "leaves/ops.hpp"
#include "leaves/random.hpp"

namespace {

using namespace leaves;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = 2.0 * rng.uniform_open() - 1.0;
  return v;
}

void BM_Conv1d(benchmark::State& state) {
  const std::size_t n = 8, c = 16, len = 256, k = 3, out_c = 16;
  Tensor x(Shape{n, c, len}, random_values(n * c * len, 1));
  Tensor w(Shape{out_c, c, k}, random_values(out_c * c * k, 2));
  for (auto _ : state) {
    Tape tape;
    Tensor xt = tape.leaf(x, false);
    Tensor wt = tape.leaf(w, true);
    Tensor y = conv1d(xt, wt, 1, 1);
    Tensor loss = mean(y);
    tape.backward(loss);
    benchmark::DoNotOptimize(wt.grad());
  }
}
BENCHMARK(BM_Conv1d);

void BM_NtXent(benchmark::State& state) {
  const std::size_t rows = static_cast<std::size_t>(state.range(0)), d = 32;
  Tensor e(Shape{rows, d}, random_values(rows * d, 3));
  for (auto _ : state) {
    Tape tape;
    Tensor et = tape.leaf(e, true);
    Tensor loss = nt_xent(EmbeddingBatch{et, 0.05});
    tape.backward(loss);
    benchmark::DoNotOptimize(et.grad());
  }
}
BENCHMARK(BM_NtXent)->Arg(16)->Arg(64);

void BM_LeavesForward(benchmark::State& state) {
  const std::size_t n = 8, c = 1, len = 256;
  AugmentBounds bounds;
  AugmentParams params(bounds);
  Tensor x(Shape{n, c, len}, random_values(n * c * len, 4));
  NoiseBundle noise = NoiseBundle::generate(5, n, c, len, bounds);
  for (auto _ : state) {
    Tape tape;
    Tensor xt = tape.leaf(x, false);
    AugmentLeaves leaves = attach_params(tape, params, true);
    Tensor v = leaves_forward(xt, leaves, bounds, noise);
    Tensor loss = mean(v);
    tape.backward(loss);
    benchmark::DoNotOptimize(leaves.raw_sigma_jitter.grad());
  }
}
BENCHMARK(BM_LeavesForward);

void BM_EncoderForward(benchmark::State& state) {
  EncoderConfig config;
  Encoder encoder(config, 6);
  const std::size_t n = 8, len = 256;
  Tensor x(Shape{n, 1, len}, random_values(n * len, 7));
  for (auto _ : state) {
    Tape tape;
    std::vector<Tensor> leaves = encoder.attach(tape, false);
    Tensor xt = tape.leaf(x, false);
    benchmark::DoNotOptimize(encoder.encoder_forward(xt, leaves, false));
  }
}
BENCHMARK(BM_EncoderForward);

}  // namespace

BENCHMARK_MAIN();
