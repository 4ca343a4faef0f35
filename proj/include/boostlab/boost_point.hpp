#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "boostlab/data.hpp"
#include "boostlab/dist.hpp"
#include "boostlab/tree.hpp"
#include "json.hpp"

namespace boostlab {

struct DartConfig {
  bool enabled = false;
  double drop_rate = 0.1;
  double skip_prob = 0.0;
};

struct BoostConfig {
  int iterations = 100;  // M
  int depth = 3;         // d
  double learning_rate = 0.01;
  double subsample = 0.75;    // delta
  double col_fraction = 1.0;  // zeta
  double min_gain = 0.0;      // gamma
  double l2 = 0.0;            // phi, leaf ridge penalty
  double min_leaf_fraction = 0.01;
  std::size_t min_leaf = 0;  // absolute minimum; overrides the fraction when > 0
  Growth growth = Growth::kDepthWise;
  std::size_t max_leaves = 0;
  std::size_t max_bins = 256;
  DartConfig dart;
  std::uint64_t seed = 0;
  int interactions = 0;              // n_int (EGBM)
  std::size_t interaction_bins = 8;  // FAST grid resolution

  void validate() const;
  std::size_t min_leaf_rows(std::size_t n) const;

  nlohmann::json to_json() const;
  static BoostConfig from_json(const nlohmann::json& j);
};

/// Response, exposure offsets and binned features shared by every trainer.
/// Exposures enter as offsets ln(e_i / e_bar) with e_bar the training mean, so
/// rescaling all exposures leaves the offsets, and hence every tree, unchanged.
struct TrainingFrame {
  std::vector<double> y;
  std::vector<double> offsets;  // empty for families without an offset
  double exposure_scale = 1.0;
  BinMap bins;
  BinnedMatrix x;

  static TrainingFrame build(const Dataset& train, const DistributionSpec& dist,
                             std::size_t max_bins);
  double offset(std::size_t i) const { return offsets.empty() ? 0.0 : offsets[i]; }
};

/// Ratio e / e_bar used to fold exposure into count predictions.
double exposure_ratio(const DistributionSpec& dist, double exposure, double exposure_scale);

struct LossRecord {
  int iteration = 0;
  double mean_nll = 0.0;
  double mean_deviance = 0.0;
};

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& history);

struct WeightedTree {
  Tree tree;
  double weight = 1.0;
};

/// Counters of numerical safeguards that fired during training.
struct TrainingFlags {
  std::size_t zero_hessian_leaves = 0;
  std::size_t clamped_leaves = 0;
  std::size_t fisher_fallbacks = 0;
  bool stopped_on_worse_cycle = false;
  int cycles = 0;
};

/// Single-parameter boosted model: f(x) = init + sum_m w_m h_m(x) on the
/// linked scale.
struct BoostedModel {
  DistributionSpec dist;  // kappa = 1; fixed_aux is the value used in training
  double init = 0.0;
  double exposure_scale = 1.0;
  BinMap bins;
  std::vector<WeightedTree> trees;
  AuxEstimate aux;  // global auxiliary estimate given the fitted means
  std::vector<LossRecord> history;
  TrainingFlags flags;

  /// Linked prediction without the exposure offset.
  double linked(const Dataset& ds, std::size_t row) const;
  std::vector<double> linked(const Dataset& ds) const;
  /// Response-scale mean prediction, exposure folded in for count families.
  double predict(const Dataset& ds, std::size_t row) const;

  nlohmann::json to_json() const;
  static BoostedModel from_json(const nlohmann::json& j);
};

BoostedModel train_gbm(const Dataset& train, const DistributionSpec& dist, const BoostConfig& cfg);
BoostedModel train_newton(const Dataset& train, const DistributionSpec& dist,
                          const BoostConfig& cfg);

/// Generalized additive model with pairwise interactions, stored as lookup
/// tables over the bins of the training features.
struct EgbmModel {
  DistributionSpec dist;
  double intercept = 0.0;  // beta_0
  double exposure_scale = 1.0;
  BinMap bins;
  std::vector<std::vector<double>> main_effects;  // [feature][bin]
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::vector<double>> interactions;  // [pair][bin_a * nb_b + bin_b]
  AuxEstimate aux;
  std::vector<LossRecord> history;
  TrainingFlags flags;

  double linked(const Dataset& ds, std::size_t row) const;
  std::vector<double> linked(const Dataset& ds) const;
  double predict(const Dataset& ds, std::size_t row) const;

  /// Lookup table as CSV: term,feature_a,range_a,feature_b,range_b,value.
  /// Numeric ranges are half-open "(lo,hi]"; categorical ranges list levels
  /// as "{A|B}" with "*" for unseen levels.
  void write_lookup_csv(std::ostream& out) const;

  nlohmann::json to_json() const;
  static EgbmModel from_json(const nlohmann::json& j);
};

/// Ranks feature pairs by the loss reduction a small interaction predictor
/// achieves on the gradients of the main-effect model; returns the top n_int.
std::vector<std::pair<std::size_t, std::size_t>> fast_select(const TrainingFrame& frame,
                                                             std::span<const double> residuals,
                                                             std::size_t n_int,
                                                             std::size_t grid_bins);

EgbmModel train_egbm(const Dataset& train, const DistributionSpec& dist, const BoostConfig& cfg);

/// Auxiliary parameter used while training a point model: NB2 takes the joint
/// maximum-likelihood dispersion of the constant model, other families 1.
DistributionSpec point_training_spec(const DistributionSpec& dist, const TrainingFrame& frame);

}  // namespace boostlab
