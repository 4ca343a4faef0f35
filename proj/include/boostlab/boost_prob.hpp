#pragma once

#include <array>
#include <vector>

#include "boostlab/boost_point.hpp"
#include "boostlab/data.hpp"
#include "boostlab/dist.hpp"
#include "json.hpp"

namespace boostlab {

struct LssConfig {
  BoostConfig boost;  // M, d, lambda, delta, zeta, gamma, phi, dart
  int q_max = 3;
  double tol = 1e-4;  // relative improvement of total training nll

  void validate() const;
};

struct CycParam {
  int iterations = 100;  // M_k
  int depth = 3;         // d_k; 0 gives a global (constant) update
  double learning_rate = 0.01;
};

struct CycConfig {
  std::array<CycParam, 2> params{};
  BoostConfig boost;  // min_leaf, growth, max_bins and seed; no subsampling

  void validate() const;
};

/// kappa = 2 model: f_k(x) = init_k + sum_m w_{k,m} h_{k,m}(x) on the linked
/// scale of parameter k.
struct ProbModel {
  DistributionSpec dist;
  ParamVector init;
  double exposure_scale = 1.0;
  BinMap bins;
  std::array<std::vector<WeightedTree>, 2> trees;
  std::vector<double> rho;  // natural-gradient step sizes, one per iteration
  std::vector<LossRecord> history;
  TrainingFlags flags;

  /// Linked parameters without the exposure offset.
  ParamVector linked(const Dataset& ds, std::size_t row) const;
  /// Offset ln(e / e_bar) for count families, 0 otherwise.
  double offset(const Dataset& ds, std::size_t row) const;
  /// Natural parameters (see Natural), exposure folded into count means.
  Natural predict(const Dataset& ds, std::size_t row) const;

  nlohmann::json to_json() const;
  static ProbModel from_json(const nlohmann::json& j);
};

ProbModel train_lss(const Dataset& train, const DistributionSpec& dist, const LssConfig& cfg);
ProbModel train_cyc(const Dataset& train, const DistributionSpec& dist, const CycConfig& cfg);
/// Uses cfg.iterations, depth, learning_rate, subsample (an extension; 1 keeps
/// every row) and the tree options.
ProbModel train_ngboost(const Dataset& train, const DistributionSpec& dist,
                        const BoostConfig& cfg);

}  // namespace boostlab
