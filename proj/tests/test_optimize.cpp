#include <cmath>
#include <stdexcept>

#include "boostlab/error.hpp"
#include "boostlab/optimize.hpp"
#include "doctest.h"

using namespace boostlab;

TEST_CASE("newton on a quadratic lands in one step") {
  // f = (x - 3)^2
  const auto r = minimize_convex([](double x) { return std::pair{2.0 * (x - 3.0), 2.0}; }, 0.0,
                                 -100.0, 100.0);
  CHECK(std::abs(r.x - 3.0) < 1e-12);
  CHECK_FALSE(r.clamped);
}

TEST_CASE("poisson-type slope converges to the log ratio") {
  // f(b) = sum(mu e^b) - sum(y) b, minimum at ln(sum y / sum mu).
  const double sy = 7.0;
  const double sm = 2.5;
  const auto r = minimize_convex(
      [&](double b) { return std::pair{sm * std::exp(b) - sy, sm * std::exp(b)}; }, 0.0, -19.0,
      19.0);
  CHECK(std::abs(r.x - std::log(sy / sm)) < 1e-10);
}

TEST_CASE("minimum outside the interval clamps to the bound") {
  const auto r = minimize_convex([](double x) { return std::pair{x - 50.0, 1.0}; }, 0.0, -5.0, 5.0);
  CHECK(r.clamped);
  CHECK(r.x == 5.0);
  const auto s = minimize_convex([](double x) { return std::pair{std::exp(x), std::exp(x)}; }, 0.0,
                                 -19.0, 19.0);
  CHECK(s.clamped);
  CHECK(s.x == -19.0);
}

TEST_CASE("flat curvature falls back to bisection") {
  // |x - 1| smoothed: slope is tanh, curvature reported as zero.
  const auto r = minimize_convex([](double x) { return std::pair{std::tanh(20.0 * (x - 1.0)), 0.0}; },
                                 -3.0, -10.0, 10.0, 1e-12, 200);
  CHECK(std::abs(r.x - 1.0) < 1e-10);
}

TEST_CASE("bad input is rejected") {
  const auto fn = [](double x) { return std::pair{x, 1.0}; };
  CHECK_THROWS_AS(minimize_convex(fn, 0.0, 1.0, -1.0), NumericalError);
  CHECK_THROWS_AS(minimize_convex(fn, 5.0, -1.0, 1.0), NumericalError);
  CHECK_THROWS_AS(minimize_convex([](double) { return std::pair{std::nan(""), 1.0}; }, 0.0, -1.0, 1.0),
                  NumericalError);
}

TEST_CASE("golden section") {
  CHECK(golden_section([](double x) { return (x - 2.5) * (x - 2.5); }, 0.0, 10.0) ==
        doctest::Approx(2.5).epsilon(1e-7));
  // Monotone functions put the minimum on an end point.
  CHECK(golden_section([](double x) { return x; }, 0.0, 10.0) == 0.0);
  CHECK(golden_section([](double x) { return -x; }, 0.0, 10.0) == 10.0);
}
