#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "boostlab/boost_point.hpp"
#include "boostlab/boost_prob.hpp"
#include "boostlab/data.hpp"
#include "boostlab/dist.hpp"
#include "json.hpp"

namespace boostlab {

inline constexpr int kModelFormatVersion = 1;

enum class Algorithm { kGbm, kNewton, kNewtonDart, kEgbm, kLss, kLssDart, kCyc, kNgboost };

std::string to_string(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view text);
bool is_probabilistic(Algorithm algorithm);
const std::vector<Algorithm>& all_algorithms();

/// Everything needed to train one model from a raw table.
struct TrainSettings {
  Algorithm algorithm = Algorithm::kNewton;
  Family family = Family::kPoisson;
  std::optional<Link> aux_link;  // link of the second parameter (probabilistic only)
  BoostConfig boost;
  int q_max = 3;      // LSS cycles
  double tol = 1e-4;  // LSS convergence
  std::array<CycParam, 2> cyc{};
  CategoricalEncoding encoding = CategoricalEncoding::kNative;
  double smoothing = 1.0;

  /// Family spec used for training: kappa 2 for probabilistic algorithms.
  DistributionSpec distribution() const;
  void validate() const;

  nlohmann::json to_json() const;
  static TrainSettings from_json(const nlohmann::json& j);
};

/// Per-row predictive distributions. For point models of two-parameter
/// families the second parameter is the global estimate.
struct Predictions {
  DistributionSpec dist;            // kappa = number of family parameters
  std::vector<ParamVector> params;  // linked, exposure offset excluded
  std::vector<double> offsets;      // ln(e / e_bar) for count families, else 0
  std::vector<double> mean;         // response-scale mean
  std::vector<double> location;     // natural location: mean, or mu of ln Y
};

struct FittedModel {
  TrainSettings settings;
  Encoder encoder;
  std::variant<BoostedModel, EgbmModel, ProbModel> model;
  double baseline = 0.0;  // linked constant of the intercept-only model
  double rebalance = 1.0;
  std::string target_name;    // column names of the training table
  std::string exposure_name;  // empty when exposure was absent

  /// `raw` is a table with the encoder's input columns.
  Predictions predict(const Dataset& raw) const;
  /// Locations of the intercept-only model on `raw`.
  std::vector<double> baseline_location(const Dataset& raw) const;

  double exposure_scale() const;
  const std::vector<LossRecord>& history() const;
  const TrainingFlags& flags() const;

  nlohmann::json to_json() const;
  static FittedModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static FittedModel load(const std::filesystem::path& path);
};

/// Fits the encoder on `raw_train`, trains, and sets the rebalancing factor
/// from the training predictions.
FittedModel fit_model(const Dataset& raw_train, const TrainSettings& settings);

}  // namespace boostlab
