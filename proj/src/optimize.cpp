#include "boostlab/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "boostlab/error.hpp"

namespace boostlab {

ScalarMinimum minimize_convex(const SlopeCurvature& fn, double x0, double lo, double hi,
                              double tol, int max_iter) {
  if (!(lo < hi) || !(x0 >= lo && x0 <= hi)) {
    throw NumericalError("minimize_convex: invalid search interval");
  }
  ScalarMinimum out;
  auto [s0, c0] = fn(x0);
  if (!std::isfinite(s0)) throw NumericalError("minimize_convex: non-finite slope at start");
  if (s0 == 0.0) {
    out.x = x0;
    return out;
  }

  // Bracket [a, b] with slope(a) < 0 < slope(b).
  const double dir = s0 < 0.0 ? 1.0 : -1.0;
  double inner = x0;
  double outer = x0;
  double width = 1.0;
  double s_outer = s0;
  double c_outer = c0;
  for (;;) {
    const double limit = dir > 0.0 ? hi : lo;
    double candidate = x0 + dir * width;
    if (dir > 0.0 ? candidate >= limit : candidate <= limit) candidate = limit;
    inner = outer;
    outer = candidate;
    std::tie(s_outer, c_outer) = fn(outer);
    if (!std::isfinite(s_outer)) throw NumericalError("minimize_convex: non-finite slope");
    if (s_outer * dir >= 0.0) break;
    if (outer == limit) {
      out.x = limit;
      out.clamped = true;
      return out;
    }
    width *= 2.0;
  }
  if (s_outer == 0.0) {
    out.x = outer;
    return out;
  }
  double a = std::min(inner, outer);
  double b = std::max(inner, outer);

  double x = inner == x0 ? x0 : inner;
  auto [s, c] = fn(x);
  for (int it = 1; it <= max_iter; ++it) {
    out.iterations = it;
    const bool newton_ok = c > 0.0 && std::isfinite(c);
    double next = newton_ok ? x - s / c : 0.5 * (a + b);
    if (newton_ok && std::abs(next - x) < tol && next >= a && next <= b) {
      out.x = next;
      return out;
    }
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    const double step = std::abs(next - x);
    x = next;
    std::tie(s, c) = fn(x);
    if (!std::isfinite(s)) throw NumericalError("minimize_convex: non-finite slope");
    if (s == 0.0 || step < tol || b - a < tol) {
      out.x = x;
      return out;
    }
    if (s < 0.0) {
      a = x;
    } else {
      b = x;
    }
  }
  throw NumericalError("minimize_convex: no convergence in " + std::to_string(max_iter) +
                       " iterations");
}

double golden_section(const std::function<double(double)>& fn, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = fn(x1);
  double f2 = fn(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = fn(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = fn(x2);
    }
  }
  // Endpoints are candidates too: the minimum of a monotone function sits on the boundary.
  double best = 0.5 * (a + b);
  double f_best = fn(best);
  for (const double edge : {lo, hi}) {
    const double f = fn(edge);
    if (f < f_best) {
      f_best = f;
      best = edge;
    }
  }
  return best;
}

}  // namespace boostlab
