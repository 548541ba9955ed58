#pragma once

#include <cstddef>
#include <functional>

#include "reachseg/numerics/parameter.hpp"

namespace reachseg {

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t entries_checked = 0;
  bool passed = true;
};

/// Compares `param.grad` (the analytic gradient, populated by the caller)
/// against central differences of `loss` with respect to every entry of
/// `param.value`. The relative error of an entry is
/// |analytic − numeric| / max(|analytic|, |numeric|, magnitude_floor), so
/// entries whose true gradient is ~0 are judged on absolute error instead.
/// `param.value` is restored before returning.
GradCheckReport finite_diff_check(const std::function<double()>& loss, Parameter& param,
                                  double tolerance, double step = 1e-5,
                                  double magnitude_floor = 1e-4);

}  // namespace reachseg
