#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace leaves {

/// Seeded uniform source. All stochasticity in the project flows through
/// this type so runs are reproducible bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform draw in the open interval (0,1).
  double uniform_open();
  std::vector<double> uniform_open(std::size_t n);

  /// Standard normal deviate via the inverse-CDF of a uniform draw.
  double normal();
  std::vector<double> normal(std::size_t n);

  /// Integer in [0, n).
  std::size_t index(std::size_t n);

  /// Fisher-Yates shuffle order for n elements.
  std::vector<std::size_t> permutation(std::size_t n);

  std::uint64_t next_seed() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Inverse standard-normal CDF (quantile). Acklam's rational approximation
/// refined with one Halley step; accurate to near machine precision on (0,1).
double inverse_normal_cdf(double p);

}  // namespace leaves
