#include "boostlab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <boost/math/constants/constants.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "boostlab/error.hpp"
#include "boostlab/random.hpp"

namespace boostlab {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DataError(std::string(what) + ": input lengths differ");
}

double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * boost::math::constants::pi<double>()); }
double big_phi(double z) { return 0.5 * boost::math::erfc(-z / std::sqrt(2.0)); }

// Row order by (value, row id).
std::vector<std::size_t> sorted_order(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  return order;
}

}  // namespace

double total_deviance(Family family, std::span<const double> y, std::span<const double> location) {
  require_same_length(y.size(), location.size(), "deviance");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += metric_deviance(family, y[i], location[i]);
  return total;
}

double pseudo_r2(Family family, std::span<const double> y, std::span<const double> location,
                 std::span<const double> baseline) {
  const double base = total_deviance(family, y, baseline);
  if (!(base > 0.0)) throw NumericalError("baseline deviance is zero");
  return 1.0 - total_deviance(family, y, location) / base;
}

double elementary_score(double y, double prediction, double nu) {
  const double lo = std::min(prediction, y);
  const double hi = std::max(prediction, y);
  return (lo <= nu && nu < hi) ? std::fabs(nu - y) : 0.0;
}

std::vector<double> murphy_grid(std::span<const double> y,
                                const std::vector<std::vector<double>>& predictions,
                                std::size_t points, double extension) {
  if (points < 2) throw ConfigError("Murphy grid needs at least 2 points");
  if (y.empty()) throw DataError("Murphy grid needs observations");
  double lo = *std::min_element(y.begin(), y.end());
  double hi = *std::max_element(y.begin(), y.end());
  for (const auto& p : predictions) {
    if (p.empty()) continue;
    lo = std::min(lo, *std::min_element(p.begin(), p.end()));
    hi = std::max(hi, *std::max_element(p.begin(), p.end()));
  }
  const double pad = extension * (hi - lo);
  lo -= pad;
  hi += pad;
  std::vector<double> grid(points);
  for (std::size_t j = 0; j < points; ++j) {
    grid[j] = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(points - 1);
  }
  return grid;
}

bool MurphyCurve::weakly_dominates(std::size_t a, std::size_t b) const {
  for (std::size_t j = 0; j < nu.size(); ++j) {
    if (scores[a][j] > scores[b][j]) return false;
  }
  return true;
}

MurphyCurve murphy_curve(std::span<const double> y,
                         const std::vector<std::vector<double>>& predictions,
                         std::vector<double> nu) {
  if (nu.empty()) throw ConfigError("Murphy grid is empty");
  MurphyCurve curve;
  curve.nu = std::move(nu);
  const auto n = static_cast<double>(y.size());
  for (const auto& pred : predictions) {
    require_same_length(y.size(), pred.size(), "Murphy curve");
    std::vector<double> scores(curve.nu.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t jj = 0; jj < static_cast<std::ptrdiff_t>(curve.nu.size()); ++jj) {
      const auto j = static_cast<std::size_t>(jj);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += elementary_score(y[i], pred[i], curve.nu[j]);
      scores[j] = s / n;
    }
    curve.scores.push_back(std::move(scores));
  }
  return curve;
}

double uniform_crps(double r) { return (r * r * r + (1.0 - r) * (1.0 - r) * (1.0 - r)) / 3.0; }

double crps_quadrature(const DistributionSpec& dist, const ParamVector& params, double y,
                       double offset) {
  if (dist.count_family()) throw ConfigError("quadrature CRPS is for continuous families");
  using boost::math::quadrature::gauss_kronrod;
  const double inf = std::numeric_limits<double>::infinity();
  const double lower = dist.family == Family::kGaussian ? -inf : 0.0;
  const auto below = [&](double z) {
    const double f = cdf(dist, params, z, offset);
    return f * f;
  };
  const auto above = [&](double z) {
    const double f = 1.0 - cdf(dist, params, z, offset);
    return f * f;
  };
  double err_lo = 0.0;
  double err_hi = 0.0;
  double left = 0.0;
  if (y > lower) left = gauss_kronrod<double, 61>::integrate(below, lower, y, 15, 1e-10, &err_lo);
  const double right = gauss_kronrod<double, 61>::integrate(above, std::max(y, lower), inf, 15,
                                                            1e-10, &err_hi);
  const double total = left + right;
  if (!std::isfinite(total) || err_lo + err_hi > 1e-8 * std::max(1.0, total)) {
    throw NumericalError("CRPS quadrature did not converge");
  }
  return total;
}

double crps(const DistributionSpec& dist, const ParamVector& params, double y, double offset) {
  const Natural p = to_natural(dist, params, offset);
  switch (dist.family) {
    case Family::kGaussian: {
      const double z = (y - p[0]) / p[1];
      return p[1] * (z * (2.0 * big_phi(z) - 1.0) + 2.0 * phi(z) -
                     1.0 / std::sqrt(boost::math::constants::pi<double>()));
    }
    case Family::kLogNormal: {
      if (!(y > 0.0)) throw DataError("lognormal CRPS needs y > 0");
      const double mu = p[0];
      const double s = p[1];
      const double z = (std::log(y) - mu) / s;
      return y * (2.0 * big_phi(z) - 1.0) -
             2.0 * std::exp(mu + 0.5 * s * s) *
                 (big_phi(z - s) + big_phi(s / std::sqrt(2.0)) - 1.0);
    }
    case Family::kGamma:
      return crps_quadrature(dist, params, y, offset);
    case Family::kPoisson:
    case Family::kNB2: {
      // The CDF is constant on [k, k + 1), so the integral is a sum over k.
      double total = 0.0;
      for (double k = 0.0;; k += 1.0) {
        const double f = cdf(dist, params, k, offset);
        const double step = (y <= k) ? 1.0 - f : f;
        total += step * step;
        if (k >= y && 1.0 - f < 1e-12) break;
        if (k > 1e9) throw NumericalError("count CRPS tail did not vanish");
      }
      return total;
    }
  }
  return 0.0;
}

DpitResult dpit_residuals(const DistributionSpec& dist, std::span<const ParamVector> params,
                          std::span<const double> offsets, std::span<const double> y,
                          std::uint64_t seed, DpitNull null) {
  if (!dist.count_family()) throw ConfigError("DPIT residuals need a count family");
  const std::size_t n = y.size();
  require_same_length(n, params.size(), "DPIT");
  DpitResult out;
  out.pit.resize(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double off = offsets.empty() ? 0.0 : offsets[i];
    const double hi = cdf(dist, params[i], y[i], off);
    const double lo = cdf(dist, params[i], y[i] - 1.0, off);
    KeyedRng rng(seed, Stream::kDpit, i);
    out.pit[i] = lo + rng.uniform() * (hi - lo);
  }
  out.residuals.resize(n);
  if (null == DpitNull::kModel) {
    // Under the fitted model every randomized PIT value is Uniform(0, 1), so
    // its null CDF is the identity.
    out.residuals = out.pit;
  } else {
    const auto order = sorted_order(out.pit);
    for (std::size_t r = 0; r < n; ++r) {
      out.residuals[order[r]] = (static_cast<double>(r) + 0.5) / static_cast<double>(n);
    }
  }
  double total = 0.0;
  for (const double r : out.residuals) total += uniform_crps(r);
  out.mean_uniform_crps = n > 0 ? total / static_cast<double>(n) : 0.0;
  return out;
}

std::vector<Coverage> ci_coverage(const DistributionSpec& dist, std::span<const ParamVector> params,
                                  std::span<const double> offsets, std::span<const double> y,
                                  std::span<const double> levels) {
  const std::size_t n = y.size();
  require_same_length(n, params.size(), "coverage");
  if (n == 0) throw DataError("coverage needs at least one row");
  std::vector<Coverage> out;
  for (const double level : levels) {
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("coverage level must lie in (0, 1)");
    std::vector<std::uint8_t> inside(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const double off = offsets.empty() ? 0.0 : offsets[i];
      const double lo = quantile(dist, params[i], 0.5 * (1.0 - level), off);
      const double hi = quantile(dist, params[i], 0.5 * (1.0 + level), off);
      inside[i] = (lo <= y[i] && y[i] <= hi) ? 1 : 0;
    }
    const auto hits = std::accumulate(inside.begin(), inside.end(), std::size_t{0});
    out.push_back({level, static_cast<double>(hits) / static_cast<double>(n)});
  }
  return out;
}

double rebalance_factor(std::span<const double> train_predictions, std::span<const double> train_y) {
  require_same_length(train_predictions.size(), train_y.size(), "rebalance");
  const double p = std::accumulate(train_predictions.begin(), train_predictions.end(), 0.0);
  if (!(p > 0.0)) throw NumericalError("rebalancing needs a positive prediction total");
  return std::accumulate(train_y.begin(), train_y.end(), 0.0) / p;
}

double balance(std::span<const double> predictions, std::span<const double> y, double factor) {
  require_same_length(predictions.size(), y.size(), "balance");
  const double observed = std::accumulate(y.begin(), y.end(), 0.0);
  if (observed == 0.0) throw NumericalError("balance needs a non-zero observed total");
  const double predicted = std::accumulate(predictions.begin(), predictions.end(), 0.0);
  return factor * predicted / observed - 1.0;
}

CalibrationCurve calibration_curve(std::span<const double> predictions, std::span<const double> y,
                                   std::size_t bins) {
  require_same_length(predictions.size(), y.size(), "calibration");
  if (bins < 2) throw ConfigError("calibration curve needs at least 2 bins");
  const std::size_t n = y.size();
  CalibrationCurve curve;
  if (n == 0) return curve;
  const auto order = sorted_order(predictions);
  std::size_t start = 0;
  for (std::size_t b = 1; b <= bins && start < n; ++b) {
    std::size_t end = b == bins ? n : (b * n) / bins;
    if (end <= start) continue;
    // Keep tied predictions together.
    while (end < n && predictions[order[end]] == predictions[order[end - 1]]) ++end;
    CalibrationPoint point;
    for (std::size_t r = start; r < end; ++r) {
      point.mean_prediction += predictions[order[r]];
      point.mean_observed += y[order[r]];
    }
    point.count = end - start;
    point.mean_prediction /= static_cast<double>(point.count);
    point.mean_observed /= static_cast<double>(point.count);
    curve.points.push_back(point);
    start = end;
  }
  curve.merged = curve.points.size() < bins;
  return curve;
}

namespace {

double sup_gap(std::span<const std::size_t> order, std::span<const double> predictions,
               std::span<const double> y) {
  const double ty = std::accumulate(y.begin(), y.end(), 0.0);
  const double tp = std::accumulate(predictions.begin(), predictions.end(), 0.0);
  if (ty == 0.0 || tp == 0.0) throw NumericalError("auto-calibration needs non-zero totals");
  double cy = 0.0;
  double cp = 0.0;
  double best = 0.0;
  for (const std::size_t i : order) {
    cy += y[i];
    cp += predictions[i];
    best = std::max(best, std::fabs(cy / ty - cp / tp));
  }
  return best;
}

}  // namespace

double autocal_statistic(std::span<const double> predictions, std::span<const double> y) {
  require_same_length(predictions.size(), y.size(), "auto-calibration");
  const auto order = sorted_order(predictions);
  return sup_gap(order, predictions, y);
}

AutocalResult autocal_test(std::span<const double> predictions, std::span<const double> y,
                           int replicates, std::uint64_t seed, std::size_t neighbours) {
  require_same_length(predictions.size(), y.size(), "auto-calibration");
  if (replicates < 1) throw ConfigError("auto-calibration needs at least one replicate");
  const std::size_t n = y.size();
  if (n < 2) throw DataError("auto-calibration needs at least 2 rows");
  const auto order = sorted_order(predictions);
  AutocalResult result;
  result.replicates = replicates;
  result.statistic = sup_gap(order, predictions, y);
  const std::size_t k =
      std::min(n, neighbours > 0 ? neighbours : std::max<std::size_t>(50, n / 100));
  result.neighbours = k;

  // Window [lo, lo + k) of sorted positions around each position, and the
  // mean response over it.
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t r = 0; r < n; ++r) prefix[r + 1] = prefix[r] + y[order[r]];
  std::vector<std::size_t> window_lo(n);
  std::vector<double> window_mean(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t lo = std::min(r >= k / 2 ? r - k / 2 : 0, n - k);
    window_lo[r] = lo;
    window_mean[r] = (prefix[lo + k] - prefix[lo]) / static_cast<double>(k);
  }

  std::vector<std::uint8_t> exceed(static_cast<std::size_t>(replicates), 0);
#pragma omp parallel for schedule(dynamic)
  for (int b = 0; b < replicates; ++b) {
    KeyedRng rng(seed, Stream::kBootstrap, static_cast<std::uint64_t>(b));
    std::vector<double> ystar(n);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t j = order[window_lo[r] + rng.below(k)];
      ystar[order[r]] = predictions[order[r]] + (y[j] - window_mean[r]);
    }
    exceed[static_cast<std::size_t>(b)] = sup_gap(order, predictions, ystar) >= result.statistic;
  }
  const auto count = std::accumulate(exceed.begin(), exceed.end(), std::size_t{0});
  result.p_value = static_cast<double>(count) / static_cast<double>(replicates);
  return result;
}

double gini(std::span<const double> base, std::span<const double> alternative,
            std::span<const double> y) {
  const std::size_t n = y.size();
  require_same_length(n, base.size(), "Gini");
  require_same_length(n, alternative.size(), "Gini");
  std::vector<double> relativity(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(base[i] > 0.0)) throw DataError("Gini needs strictly positive base premiums");
    relativity[i] = alternative[i] / base[i];
  }
  const double tp = std::accumulate(base.begin(), base.end(), 0.0);
  const double ty = std::accumulate(y.begin(), y.end(), 0.0);
  if (!(tp > 0.0) || ty == 0.0) throw NumericalError("Gini needs non-zero premium and loss totals");
  const auto order = sorted_order(relativity);
  double area = 0.0;
  double x0 = 0.0;
  double y0 = 0.0;
  double cp = 0.0;
  double cy = 0.0;
  for (std::size_t r = 0; r < n;) {
    std::size_t end = r;
    while (end < n && relativity[order[end]] == relativity[order[r]]) {
      cp += base[order[end]];
      cy += y[order[end]];
      ++end;
    }
    const double x1 = cp / tp;
    const double y1 = cy / ty;
    area += 0.5 * (x1 - x0) * (y0 + y1);
    x0 = x1;
    y0 = y1;
    r = end;
  }
  return 2.0 * (0.5 - area);
}

GiniTable gini_matrix(const std::vector<std::vector<double>>& premiums, std::span<const double> y) {
  GiniTable table;
  const std::size_t k = premiums.size();
  table.gini.assign(k, std::vector<double>(k, 0.0));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < k; ++b) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < k; ++a) {
      table.gini[b][a] = gini(premiums[b], premiums[a], y);
      if (a != b) worst = std::max(worst, table.gini[b][a]);
    }
    if (worst < best) {
      best = worst;
      table.winner = b;
    }
  }
  return table;
}

}  // namespace boostlab
