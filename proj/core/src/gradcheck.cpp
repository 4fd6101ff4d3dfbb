#include "leaves/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace leaves {

GradCheckReport grad_check(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& x,
                           const std::vector<double>& analytic, double step) {
  if (analytic.size() != x.size())
    throw std::invalid_argument("grad_check: analytic gradient size mismatch");
  GradCheckReport report;
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double fp = f(probe);
    probe[i] = x[i] - step;
    const double fm = f(probe);
    probe[i] = x[i];
    const double numeric = (fp - fm) / (2.0 * step);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

double grad_check_max_error(const std::function<double(const std::vector<double>&)>& f,
                            const std::vector<double>& x,
                            const std::vector<double>& analytic, double step) {
  return grad_check(f, x, analytic, step).max_rel_error;
}

}  // namespace leaves
