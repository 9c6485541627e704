#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "contrawr/errors.hpp"

namespace contrawr {

// Central-difference comparison for analytic gradients, run at 64-bit.
// Returns the worst relative error over all coordinates, with the
// denominator floored so near-zero gradients are compared absolutely.
inline double finite_difference_check(const std::function<double(const std::vector<double>&)>& fn,
                                      const std::vector<double>& point,
                                      const std::vector<double>& analytic_grad,
                                      double step = 1e-5) {
  if (point.size() != analytic_grad.size()) {
    throw contract_error("finite_difference_check: point/gradient size mismatch");
  }
  double worst = 0.0;
  std::vector<double> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = fn(probe);
    probe[i] = point[i] - step;
    const double down = fn(probe);
    probe[i] = point[i];
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(numeric), std::abs(analytic_grad[i]), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic_grad[i]) / denom);
  }
  return worst;
}

}  // namespace contrawr
