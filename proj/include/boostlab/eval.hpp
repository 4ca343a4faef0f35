#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "boostlab/dist.hpp"
#include "json.hpp"

namespace boostlab {

/// Sum of the reporting deviance (see metric_deviance) over the rows.
double total_deviance(Family family, std::span<const double> y, std::span<const double> location);

/// 1 - D(model) / D(baseline), with `baseline` the locations of the
/// exposure-adjusted constant model fitted on the training data.
double pseudo_r2(Family family, std::span<const double> y, std::span<const double> location,
                 std::span<const double> baseline);

// ---- Murphy diagrams ----

double elementary_score(double y, double prediction, double nu);

/// `points` equally spaced values over [min, max] of y and every prediction,
/// widened by `extension` of the range on each side.
std::vector<double> murphy_grid(std::span<const double> y,
                                const std::vector<std::vector<double>>& predictions,
                                std::size_t points = 401, double extension = 0.05);

struct MurphyCurve {
  std::vector<double> nu;
  std::vector<std::vector<double>> scores;  // [model][grid point]

  /// Model a scores no worse than model b at every grid point.
  bool weakly_dominates(std::size_t a, std::size_t b) const;
};

MurphyCurve murphy_curve(std::span<const double> y,
                         const std::vector<std::vector<double>>& predictions,
                         std::vector<double> nu);

// ---- CRPS ----

/// Closed form for Gaussian and LogNormal, exact step sum for count families,
/// adaptive quadrature split at y for Gamma.
double crps(const DistributionSpec& dist, const ParamVector& params, double y, double offset = 0.0);

/// Direct quadrature of the definition, for any continuous family.
double crps_quadrature(const DistributionSpec& dist, const ParamVector& params, double y,
                       double offset = 0.0);

/// CRPS of the Uniform(0, 1) forecast at r: r^3/3 + (1 - r)^3/3.
double uniform_crps(double r);

// ---- DPIT residuals ----

enum class DpitNull {
  kModel,      // null CDF of the PIT implied by the fitted model
  kEmpirical,  // empirical CDF of the PIT values, midpoint ranks
};

struct DpitResult {
  std::vector<double> pit;        // randomized PIT values
  std::vector<double> residuals;  // second-stage transform
  double mean_uniform_crps = 0.0;
};

/// Two-stage transform for count families. Stage 1 draws
/// u_i ~ Uniform(F(y_i - 1), F(y_i)) from a keyed stream.
DpitResult dpit_residuals(const DistributionSpec& dist, std::span<const ParamVector> params,
                          std::span<const double> offsets, std::span<const double> y,
                          std::uint64_t seed, DpitNull null = DpitNull::kModel);

// ---- Interval coverage ----

struct Coverage {
  double level = 0.0;
  double coverage = 0.0;
};

/// Share of rows inside the equal-tailed predictive interval at each level.
std::vector<Coverage> ci_coverage(const DistributionSpec& dist, std::span<const ParamVector> params,
                                  std::span<const double> offsets, std::span<const double> y,
                                  std::span<const double> levels);

// ---- Balance ----

/// Sum of y over sum of predictions on the training data.
double rebalance_factor(std::span<const double> train_predictions, std::span<const double> train_y);

/// sum(factor * prediction) / sum(y) - 1.
double balance(std::span<const double> predictions, std::span<const double> y, double factor = 1.0);

// ---- Calibration ----

struct CalibrationPoint {
  double mean_prediction = 0.0;
  double mean_observed = 0.0;
  std::size_t count = 0;
};

struct CalibrationCurve {
  std::vector<CalibrationPoint> points;
  bool merged = false;  // fewer bins than requested because of tied predictions
};

/// Equal-count bins by prediction; rows with equal predictions share a bin.
CalibrationCurve calibration_curve(std::span<const double> predictions, std::span<const double> y,
                                   std::size_t bins);

// ---- Auto-calibration ----

struct AutocalResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int replicates = 0;
  std::size_t neighbours = 0;
};

/// sup_j |CC_j - LC_j| over rows ordered by (prediction, row id).
double autocal_statistic(std::span<const double> predictions, std::span<const double> y);

/// Bootstrap test of E[Y | prediction] = prediction. Null responses are
/// y*_i = p_i + (y_j - mean of y over N(i)), with j drawn from N(i), the k rows
/// nearest to i in prediction order; k = max(50, n / 100) when 0 is passed.
AutocalResult autocal_test(std::span<const double> predictions, std::span<const double> y,
                           int replicates, std::uint64_t seed, std::size_t neighbours = 0);

// ---- Gini ----

/// Ordered Lorenz curve Gini of `alternative` against `base` premiums. Rows
/// are sorted by relativity alternative / base; tied relativities form one
/// segment.
double gini(std::span<const double> base, std::span<const double> alternative,
            std::span<const double> y);

struct GiniTable {
  std::vector<std::vector<double>> gini;  // [base][alternative]
  std::size_t winner = 0;                 // smallest row maximum
};

GiniTable gini_matrix(const std::vector<std::vector<double>>& premiums, std::span<const double> y);

}  // namespace boostlab
