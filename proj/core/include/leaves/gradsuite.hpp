#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace leaves {

struct GradSuiteOptions {
  double fd_step = 1e-5;
  /// Mutation hook for checker self-tests: negate the analytic jitter
  /// gradient before comparing, which must make the suite fail.
  bool flip_jitter_gradient = false;
};

struct GradSuiteResult {
  std::string name;
  double max_rel_error = 0.0;
};

/// Finite-difference checks for every differentiable operation plus the
/// composed augmentation/encoder/contrastive pipeline, on small random
/// inputs drawn from the seed. The permutation surrogate is excluded: its
/// forward value is piecewise constant in the raw parameter, so a central
/// difference is identically zero and cannot validate the surrogate.
std::vector<GradSuiteResult> gradient_suite(std::uint64_t seed,
                                            const GradSuiteOptions& options = {});

/// Largest error across the suite; `worst` receives the offending check.
double gradient_suite_worst(std::uint64_t seed, const GradSuiteOptions& options,
                            GradSuiteResult& worst);

}  // namespace leaves
