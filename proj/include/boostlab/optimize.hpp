#pragma once

#include <functional>
#include <utility>

namespace boostlab {

/// Returns (f'(x), f''(x)) of a convex scalar function.
using SlopeCurvature = std::function<std::pair<double, double>(double)>;

struct ScalarMinimum {
  double x = 0.0;
  int iterations = 0;
  bool clamped = false;  // no stationary point inside [lo, hi]; x is a bound
};

/// Minimizes a convex function on [lo, hi] by Newton steps on its derivative,
/// falling back to bisection whenever a step leaves the current bracket. The
/// search starts at x0 and grows a bracket outward by doubling. Converged when
/// a step is shorter than `tol`; throws NumericalError after `max_iter`
/// iterations.
ScalarMinimum minimize_convex(const SlopeCurvature& fn, double x0, double lo, double hi,
                              double tol = 1e-10, int max_iter = 100);

/// Golden-section search for the minimum of a unimodal function on [lo, hi].
double golden_section(const std::function<double(double)>& fn, double lo, double hi,
                      double tol = 1e-8);

}  // namespace boostlab
