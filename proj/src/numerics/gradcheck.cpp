#include "reachseg/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace reachseg {

GradCheckReport finite_diff_check(const std::function<double()>& loss, Parameter& param,
                                  double tolerance, double step, double magnitude_floor) {
  require_same_shape(param.value, param.grad, "finite_diff_check");
  GradCheckReport report;
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double original = param.value[i];
    param.value[i] = original + step;
    const double plus = loss();
    param.value[i] = original - step;
    const double minus = loss();
    param.value[i] = original;

    const double numeric = (plus - minus) / (2.0 * step);
    const double analytic = param.grad[i];
    const double abs_err = std::abs(analytic - numeric);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), magnitude_floor});
    report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
    report.max_relative_error = std::max(report.max_relative_error, abs_err / scale);
    ++report.entries_checked;
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace reachseg
