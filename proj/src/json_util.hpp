#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "boostlab/boost_point.hpp"
#include "boostlab/dist.hpp"
#include "json.hpp"

namespace boostlab::detail {

nlohmann::json to_json(const DistributionSpec& dist);
DistributionSpec dist_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ParamVector& p);
ParamVector param_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AuxEstimate& aux);
AuxEstimate aux_from_json(const nlohmann::json& j);

nlohmann::json to_json(const std::vector<LossRecord>& history);
std::vector<LossRecord> history_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainingFlags& flags);
TrainingFlags flags_from_json(const nlohmann::json& j);

nlohmann::json to_json(const std::vector<WeightedTree>& trees);
std::vector<WeightedTree> trees_from_json(const nlohmann::json& j);

/// Mean nll and reporting deviance over the training rows; throws
/// NumericalError when the loss is not finite.
LossRecord training_loss(const DistributionSpec& dist, const TrainingFrame& frame,
                         const std::vector<ParamVector>& params, int iteration);

/// Global auxiliary estimate for a point model given its fitted locations.
AuxEstimate point_aux(const DistributionSpec& dist, const TrainingFrame& frame,
                      const std::vector<ParamVector>& params);

struct CoordinateRun {
  int k = 0;                   // parameter boosted
  std::uint64_t key_base = 0;  // iteration m draws with key key_base + m
  bool line_search = false;    // exact line-search leaves instead of Newton leaves
};

/// Runs cfg.iterations boosting steps on parameter k of `f`, holding the
/// other parameter fixed. Newton steps support DART; trees are appended.
void boost_coordinate(const DistributionSpec& dist, const TrainingFrame& frame,
                      const BoostConfig& cfg, const CoordinateRun& run,
                      std::vector<ParamVector>& f, std::vector<WeightedTree>& trees,
                      TrainingFlags& flags, const std::function<void(int)>& after_iteration);

/// Response mean of a point model from its linked location.
double point_mean(const DistributionSpec& dist, double linked, double ratio, double aux);

}  // namespace boostlab::detail
