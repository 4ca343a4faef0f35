#include "boostlab/model.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <type_traits>

#include "boostlab/error.hpp"
#include "boostlab/eval.hpp"
#include "json_util.hpp"

namespace boostlab {

namespace {

struct AlgorithmName {
  Algorithm algorithm;
  const char* name;
};

constexpr AlgorithmName kAlgorithmNames[] = {
    {Algorithm::kGbm, "gbm"},   {Algorithm::kNewton, "newton"}, {Algorithm::kNewtonDart, "newton-dart"},
    {Algorithm::kEgbm, "egbm"}, {Algorithm::kLss, "lss"},       {Algorithm::kLssDart, "lss-dart"},
    {Algorithm::kCyc, "cyc"},   {Algorithm::kNgboost, "ngboost"},
};

DistributionSpec count_baseline_spec(Family family) {
  // Count baselines use the Poisson mean MLE, the constant that minimizes the
  // reporting (Poisson) deviance.
  if (family == Family::kPoisson || family == Family::kNB2) {
    return DistributionSpec::make(Family::kPoisson, 1);
  }
  return DistributionSpec::make(family, 1);
}

}  // namespace

std::string to_string(Algorithm algorithm) {
  for (const auto& a : kAlgorithmNames) {
    if (a.algorithm == algorithm) return a.name;
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view text) {
  for (const auto& a : kAlgorithmNames) {
    if (text == a.name) return a.algorithm;
  }
  throw ConfigError("unknown algorithm '" + std::string(text) +
                    "' (expected gbm, newton, newton-dart, egbm, lss, lss-dart, cyc or ngboost)");
}

bool is_probabilistic(Algorithm algorithm) {
  return algorithm == Algorithm::kLss || algorithm == Algorithm::kLssDart ||
         algorithm == Algorithm::kCyc || algorithm == Algorithm::kNgboost;
}

const std::vector<Algorithm>& all_algorithms() {
  static const std::vector<Algorithm> list = [] {
    std::vector<Algorithm> out;
    for (const auto& a : kAlgorithmNames) out.push_back(a.algorithm);
    return out;
  }();
  return list;
}

DistributionSpec TrainSettings::distribution() const {
  const bool prob = is_probabilistic(algorithm);
  DistributionSpec probe = DistributionSpec::make(family, 1);
  if (prob && probe.family_params() < 2) {
    throw ConfigError("algorithm " + to_string(algorithm) + " needs a two-parameter family; " +
                      to_string(family) + " has one");
  }
  DistributionSpec dist = DistributionSpec::make(family, prob ? 2 : 1);
  if (aux_link) {
    if (!prob) throw ConfigError("aux_link applies to probabilistic algorithms only");
    dist.links[1] = *aux_link;
  }
  dist.validate();
  return dist;
}

void TrainSettings::validate() const {
  distribution();
  const bool dart = algorithm == Algorithm::kNewtonDart || algorithm == Algorithm::kLssDart;
  if (boost.dart.enabled && !dart) {
    throw ConfigError("dart options need algorithm newton-dart or lss-dart");
  }
  BoostConfig b = boost;
  b.dart.enabled = dart;
  b.validate();
  if (q_max < 0) throw ConfigError("q_max must be non-negative");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
  if (!(smoothing >= 0.0)) throw ConfigError("smoothing must be non-negative");
  if (algorithm == Algorithm::kCyc) {
    CycConfig c{cyc, b};
    c.validate();
  }
}

nlohmann::json TrainSettings::to_json() const {
  nlohmann::json cj = nlohmann::json::array();
  for (const auto& p : cyc) {
    cj.push_back({{"iterations", p.iterations}, {"depth", p.depth}, {"learning_rate", p.learning_rate}});
  }
  nlohmann::json j{{"algorithm", to_string(algorithm)},
                   {"family", to_string(family)},
                   {"boost", boost.to_json()},
                   {"q_max", q_max},
                   {"tol", tol},
                   {"cyc", cj},
                   {"encoding", to_string(encoding)},
                   {"smoothing", smoothing}};
  j["aux_link"] = aux_link ? nlohmann::json(to_string(*aux_link)) : nlohmann::json(nullptr);
  return j;
}

TrainSettings TrainSettings::from_json(const nlohmann::json& j) {
  TrainSettings s;
  s.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  s.family = parse_family(j.at("family").get<std::string>());
  if (!j.at("aux_link").is_null()) s.aux_link = parse_link(j.at("aux_link").get<std::string>());
  s.boost = BoostConfig::from_json(j.at("boost"));
  s.q_max = j.at("q_max").get<int>();
  s.tol = j.at("tol").get<double>();
  const auto& cj = j.at("cyc");
  for (std::size_t k = 0; k < 2; ++k) {
    s.cyc[k].iterations = cj.at(k).at("iterations").get<int>();
    s.cyc[k].depth = cj.at(k).at("depth").get<int>();
    s.cyc[k].learning_rate = cj.at(k).at("learning_rate").get<double>();
  }
  s.encoding = parse_encoding(j.at("encoding").get<std::string>());
  s.smoothing = j.at("smoothing").get<double>();
  return s;
}

FittedModel fit_model(const Dataset& raw_train, const TrainSettings& settings) {
  settings.validate();
  FittedModel fitted;
  fitted.settings = settings;
  fitted.target_name = raw_train.target_name;
  fitted.exposure_name = raw_train.exposure_name;
  fitted.encoder = Encoder::fit(raw_train, settings.encoding, settings.smoothing);
  const Dataset train = fitted.encoder.transform(raw_train);
  const DistributionSpec dist = settings.distribution();
  BoostConfig boost = settings.boost;
  boost.dart.enabled =
      settings.algorithm == Algorithm::kNewtonDart || settings.algorithm == Algorithm::kLssDart;

  switch (settings.algorithm) {
    case Algorithm::kGbm:
      fitted.model = train_gbm(train, dist, boost);
      break;
    case Algorithm::kNewton:
    case Algorithm::kNewtonDart:
      fitted.model = train_newton(train, dist, boost);
      break;
    case Algorithm::kEgbm:
      fitted.model = train_egbm(train, dist, boost);
      break;
    case Algorithm::kLss:
    case Algorithm::kLssDart:
      fitted.model = train_lss(train, dist, LssConfig{boost, settings.q_max, settings.tol});
      break;
    case Algorithm::kCyc:
      fitted.model = train_cyc(train, dist, CycConfig{settings.cyc, boost});
      break;
    case Algorithm::kNgboost:
      fitted.model = train_ngboost(train, dist, boost);
      break;
  }

  const DistributionSpec base = count_baseline_spec(settings.family);
  std::vector<double> offsets;
  if (base.uses_offset()) {
    const double scale = fitted.exposure_scale();
    for (const double e : train.exposure) offsets.push_back(std::log(e / scale));
  }
  fitted.baseline = init_mle(base, train.target, offsets)[0];

  const Predictions pred = fitted.predict(raw_train);
  // A multiplicative factor needs positive totals; signed Gaussian targets keep 1.
  const double observed = std::accumulate(train.target.begin(), train.target.end(), 0.0);
  const double predicted = std::accumulate(pred.mean.begin(), pred.mean.end(), 0.0);
  fitted.rebalance = observed > 0.0 && predicted > 0.0 ? rebalance_factor(pred.mean, train.target)
                                                       : 1.0;
  return fitted;
}

Predictions FittedModel::predict(const Dataset& raw) const {
  const Dataset ds = encoder.transform(raw);
  ds.validate(false);
  const std::size_t n = ds.size();
  Predictions out;
  out.params.resize(n);
  out.offsets.assign(n, 0.0);
  out.mean.resize(n);
  out.location.resize(n);
  const DistributionSpec family = DistributionSpec::make(settings.family, 1);
  const double scale = exposure_scale();

  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ProbModel>) {
          out.dist = m.dist;
        } else {
          out.dist = DistributionSpec::make(settings.family, family.family_params());
        }
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
          const auto i = static_cast<std::size_t>(ii);
          const double ratio = exposure_ratio(family, ds.exposure[i], scale);
          if (family.uses_offset()) out.offsets[i] = std::log(ds.exposure[i] / scale);
          ParamVector p;
          p.size = out.dist.kappa;
          if constexpr (std::is_same_v<T, ProbModel>) {
            p = m.linked(ds, i);
          } else {
            p[0] = m.linked(ds, i);
            if (out.dist.kappa == 2) p[1] = link_forward(out.dist.links[1], m.aux.value);
          }
          out.params[i] = p;
          const Natural nat = to_natural(out.dist, p, out.offsets[i]);
          out.location[i] = nat[0];
          const double base_mean = link_inverse(out.dist.links[0], p[0]);
          if (settings.family == Family::kLogNormal) {
            out.mean[i] = std::exp(nat[0] + 0.5 * nat[1] * nat[1]);
          } else {
            out.mean[i] = base_mean * ratio;
          }
        }
      },
      model);
  return out;
}

std::vector<double> FittedModel::baseline_location(const Dataset& raw) const {
  const Dataset ds = encoder.transform(raw);
  const DistributionSpec base = count_baseline_spec(settings.family);
  const double scale = exposure_scale();
  std::vector<double> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ParamVector p;
    p[0] = baseline;
    const double off = base.uses_offset() ? std::log(ds.exposure[i] / scale) : 0.0;
    out[i] = to_natural(base, p, off)[0];
  }
  return out;
}

double FittedModel::exposure_scale() const {
  return std::visit([](const auto& m) { return m.exposure_scale; }, model);
}

const std::vector<LossRecord>& FittedModel::history() const {
  return std::visit([](const auto& m) -> const std::vector<LossRecord>& { return m.history; },
                    model);
}

const TrainingFlags& FittedModel::flags() const {
  return std::visit([](const auto& m) -> const TrainingFlags& { return m.flags; }, model);
}

nlohmann::json FittedModel::to_json() const {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["settings"] = settings.to_json();
  j["encoder"] = encoder.to_json();
  j["baseline"] = baseline;
  j["rebalance"] = rebalance;
  j["target_name"] = target_name;
  j["exposure_name"] = exposure_name;
  j["kind"] = std::visit(
      [](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, BoostedModel>) return "trees";
        else if constexpr (std::is_same_v<T, EgbmModel>) return "egbm";
        else return "distributional";
      },
      model);
  j["model"] = std::visit([](const auto& m) { return m.to_json(); }, model);
  return j;
}

FittedModel FittedModel::from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw DataError("unsupported model format_version " + std::to_string(version));
    }
    FittedModel f;
    f.settings = TrainSettings::from_json(j.at("settings"));
    f.encoder = Encoder::from_json(j.at("encoder"));
    f.baseline = j.at("baseline").get<double>();
    f.rebalance = j.at("rebalance").get<double>();
    f.target_name = j.at("target_name").get<std::string>();
    f.exposure_name = j.at("exposure_name").get<std::string>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "trees") {
      f.model = BoostedModel::from_json(j.at("model"));
    } else if (kind == "egbm") {
      f.model = EgbmModel::from_json(j.at("model"));
    } else if (kind == "distributional") {
      f.model = ProbModel::from_json(j.at("model"));
    } else {
      throw DataError("unknown model kind '" + kind + "'");
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

void FittedModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json().dump(1) << '\n';
}

FittedModel FittedModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace boostlab
