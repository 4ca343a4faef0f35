#include "json_util.hpp"

namespace boostlab::detail {

nlohmann::json to_json(const DistributionSpec& dist) {
  return {{"family", to_string(dist.family)},
          {"kappa", dist.kappa},
          {"links", {to_string(dist.links[0]), to_string(dist.links[1])}},
          {"fixed_aux", dist.fixed_aux}};
}

DistributionSpec dist_from_json(const nlohmann::json& j) {
  DistributionSpec d;
  d.family = parse_family(j.at("family").get<std::string>());
  d.kappa = j.at("kappa").get<int>();
  d.links = {parse_link(j.at("links")[0].get<std::string>()),
             parse_link(j.at("links")[1].get<std::string>())};
  d.fixed_aux = j.at("fixed_aux").get<double>();
  d.validate();
  return d;
}

nlohmann::json to_json(const ParamVector& p) {
  nlohmann::json out = nlohmann::json::array();
  for (int k = 0; k < p.size; ++k) out.push_back(p[k]);
  return out;
}

ParamVector param_from_json(const nlohmann::json& j) {
  ParamVector p;
  p.size = static_cast<int>(j.size());
  for (int k = 0; k < p.size; ++k) p[k] = j[static_cast<std::size_t>(k)].get<double>();
  return p;
}

nlohmann::json to_json(const AuxEstimate& aux) {
  return {{"value", aux.value}, {"at_bound", aux.at_bound}};
}

AuxEstimate aux_from_json(const nlohmann::json& j) {
  return {j.at("value").get<double>(), j.at("at_bound").get<bool>()};
}

nlohmann::json to_json(const std::vector<LossRecord>& history) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : history) out.push_back({r.iteration, r.mean_nll, r.mean_deviance});
  return out;
}

std::vector<LossRecord> history_from_json(const nlohmann::json& j) {
  std::vector<LossRecord> out;
  for (const auto& r : j) {
    out.push_back({r[0].get<int>(), r[1].get<double>(), r[2].get<double>()});
  }
  return out;
}

nlohmann::json to_json(const TrainingFlags& flags) {
  return {{"zero_hessian_leaves", flags.zero_hessian_leaves},
          {"clamped_leaves", flags.clamped_leaves},
          {"fisher_fallbacks", flags.fisher_fallbacks},
          {"stopped_on_worse_cycle", flags.stopped_on_worse_cycle},
          {"cycles", flags.cycles}};
}

TrainingFlags flags_from_json(const nlohmann::json& j) {
  TrainingFlags f;
  f.zero_hessian_leaves = j.at("zero_hessian_leaves").get<std::size_t>();
  f.clamped_leaves = j.at("clamped_leaves").get<std::size_t>();
  f.fisher_fallbacks = j.at("fisher_fallbacks").get<std::size_t>();
  f.stopped_on_worse_cycle = j.at("stopped_on_worse_cycle").get<bool>();
  f.cycles = j.at("cycles").get<int>();
  return f;
}

nlohmann::json to_json(const std::vector<WeightedTree>& trees) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : trees) out.push_back({{"weight", t.weight}, {"tree", t.tree.to_json()}});
  return out;
}

std::vector<WeightedTree> trees_from_json(const nlohmann::json& j) {
  std::vector<WeightedTree> out;
  for (const auto& t : j) {
    out.push_back({Tree::from_json(t.at("tree")), t.at("weight").get<double>()});
  }
  return out;
}

}  // namespace boostlab::detail
