#pragma once

#include <functional>
#include <vector>

namespace leaves {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Central finite differences against an analytic gradient. The relative
/// error denominator is max(1, |analytic|, |numeric|) per coordinate.
/// `f` must be deterministic (fix the NoiseBundle before calling).
GradCheckReport grad_check(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& x,
                           const std::vector<double>& analytic, double step);

/// Convenience: evaluates f once to obtain the analytic gradient via the
/// supplied closure, then compares. Returns max relative error.
double grad_check_max_error(const std::function<double(const std::vector<double>&)>& f,
                            const std::vector<double>& x,
                            const std::vector<double>& analytic, double step);

}  // namespace leaves
