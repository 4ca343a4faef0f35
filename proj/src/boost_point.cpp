#include "boostlab/boost_point.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>

#include "boostlab/error.hpp"
#include "boostlab/random.hpp"
#include "json_util.hpp"

namespace boostlab {

void BoostConfig::validate() const {
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
  if (depth < 0) throw ConfigError("depth must be non-negative");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw ConfigError("learning_rate must lie in (0, 1]");
  }
  if (!(subsample > 0.0 && subsample <= 1.0)) throw ConfigError("subsample must lie in (0, 1]");
  if (!(col_fraction > 0.0 && col_fraction <= 1.0)) {
    throw ConfigError("col_fraction must lie in (0, 1]");
  }
  if (!(min_gain >= 0.0)) throw ConfigError("min_gain must be non-negative");
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be non-negative");
  if (!(min_leaf_fraction >= 0.0 && min_leaf_fraction < 0.5)) {
    throw ConfigError("min_leaf_fraction must lie in [0, 0.5)");
  }
  if (max_bins < 2) throw ConfigError("max_bins must be at least 2");
  if (!(dart.drop_rate >= 0.0 && dart.drop_rate < 1.0)) {
    throw ConfigError("dart drop_rate must lie in [0, 1)");
  }
  if (!(dart.skip_prob >= 0.0 && dart.skip_prob <= 1.0)) {
    throw ConfigError("dart skip_prob must lie in [0, 1]");
  }
  if (interactions < 0) throw ConfigError("interactions must be non-negative");
  if (interaction_bins < 2) throw ConfigError("interaction_bins must be at least 2");
}

std::size_t BoostConfig::min_leaf_rows(std::size_t n) const {
  if (min_leaf > 0) return min_leaf;
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(min_leaf_fraction * static_cast<double>(n))));
}

nlohmann::json BoostConfig::to_json() const {
  return {{"iterations", iterations},
          {"depth", depth},
          {"learning_rate", learning_rate},
          {"subsample", subsample},
          {"col_fraction", col_fraction},
          {"min_gain", min_gain},
          {"l2", l2},
          {"min_leaf_fraction", min_leaf_fraction},
          {"min_leaf", min_leaf},
          {"growth", to_string(growth)},
          {"max_leaves", max_leaves},
          {"max_bins", max_bins},
          {"dart",
           {{"enabled", dart.enabled}, {"drop_rate", dart.drop_rate}, {"skip_prob", dart.skip_prob}}},
          {"seed", seed},
          {"interactions", interactions},
          {"interaction_bins", interaction_bins}};
}

BoostConfig BoostConfig::from_json(const nlohmann::json& j) {
  BoostConfig c;
  c.iterations = j.at("iterations").get<int>();
  c.depth = j.at("depth").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.subsample = j.at("subsample").get<double>();
  c.col_fraction = j.at("col_fraction").get<double>();
  c.min_gain = j.at("min_gain").get<double>();
  c.l2 = j.at("l2").get<double>();
  c.min_leaf_fraction = j.at("min_leaf_fraction").get<double>();
  c.min_leaf = j.at("min_leaf").get<std::size_t>();
  c.growth = parse_growth(j.at("growth").get<std::string>());
  c.max_leaves = j.at("max_leaves").get<std::size_t>();
  c.max_bins = j.at("max_bins").get<std::size_t>();
  c.dart.enabled = j.at("dart").at("enabled").get<bool>();
  c.dart.drop_rate = j.at("dart").at("drop_rate").get<double>();
  c.dart.skip_prob = j.at("dart").at("skip_prob").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.interactions = j.at("interactions").get<int>();
  c.interaction_bins = j.at("interaction_bins").get<std::size_t>();
  return c;
}

TrainingFrame TrainingFrame::build(const Dataset& train, const DistributionSpec& dist,
                                   std::size_t max_bins) {
  train.validate(dist.count_family());
  if (train.size() == 0) throw DataError("training data is empty");
  TrainingFrame frame;
  frame.y = train.target;
  for (const double v : frame.y) dist.check_support(v);
  if (dist.uses_offset()) {
    const double total = std::accumulate(train.exposure.begin(), train.exposure.end(), 0.0);
    frame.exposure_scale = total / static_cast<double>(train.size());
    frame.offsets.resize(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      frame.offsets[i] = std::log(train.exposure[i] / frame.exposure_scale);
    }
  }
  frame.bins = build_bins(train, max_bins);
  frame.x = bin_dataset(frame.bins, train);
  return frame;
}

double exposure_ratio(const DistributionSpec& dist, double exposure, double exposure_scale) {
  return dist.uses_offset() ? exposure / exposure_scale : 1.0;
}

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& history) {
  out << "iteration,mean_nll,mean_deviance\n";
  out.precision(17);
  for (const auto& r : history) {
    out << r.iteration << ',' << r.mean_nll << ',' << r.mean_deviance << '\n';
  }
}

DistributionSpec point_training_spec(const DistributionSpec& dist, const TrainingFrame& frame) {
  DistributionSpec spec = dist;
  spec.kappa = 1;
  if (dist.family == Family::kNB2) {
    DistributionSpec joint = DistributionSpec::make(Family::kNB2, 2);
    spec.fixed_aux = std::exp(init_mle(joint, frame.y, frame.offsets)[1]);
  }
  spec.validate();
  return spec;
}

namespace detail {

LossRecord training_loss(const DistributionSpec& dist, const TrainingFrame& frame,
                         const std::vector<ParamVector>& params, int iteration) {
  const std::size_t n = frame.y.size();
  std::vector<double> nlls(n);
  std::vector<double> devs(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double off = frame.offset(i);
    nlls[i] = nll(dist, params[i], frame.y[i], off);
    devs[i] = metric_deviance(dist.family, frame.y[i], to_natural(dist, params[i], off)[0]);
  }
  LossRecord r;
  r.iteration = iteration;
  for (std::size_t i = 0; i < n; ++i) {
    r.mean_nll += nlls[i];
    r.mean_deviance += devs[i];
  }
  r.mean_nll /= static_cast<double>(n);
  r.mean_deviance /= static_cast<double>(n);
  if (!std::isfinite(r.mean_nll)) {
    throw NumericalError("non-finite training loss at iteration " + std::to_string(iteration));
  }
  return r;
}

AuxEstimate point_aux(const DistributionSpec& dist, const TrainingFrame& frame,
                      const std::vector<ParamVector>& params) {
  if (!dist.has_aux()) return {};
  std::vector<double> location(frame.y.size());
  for (std::size_t i = 0; i < location.size(); ++i) {
    location[i] = to_natural(dist, params[i], frame.offset(i))[0];
  }
  return global_aux_mle(dist, frame.y, location);
}

double point_mean(const DistributionSpec& dist, double linked, double ratio, double aux) {
  const double location = link_inverse(dist.links[0], linked) * ratio;
  if (dist.family == Family::kLogNormal) return std::exp(location + 0.5 * aux * aux);
  return location;
}

}  // namespace detail

namespace {

TreeParams tree_params(const BoostConfig& cfg, std::size_t n, std::uint64_t iteration) {
  TreeParams tp;
  tp.max_depth = cfg.depth;
  tp.min_leaf = cfg.min_leaf_rows(n);
  tp.col_fraction = cfg.col_fraction;
  tp.min_gain = cfg.min_gain;
  tp.growth = cfg.growth;
  tp.max_leaves = cfg.max_leaves;
  tp.seed = cfg.seed;
  tp.iteration = iteration;
  return tp;
}

}  // namespace

namespace detail {

void boost_coordinate(const DistributionSpec& dist, const TrainingFrame& frame,
                      const BoostConfig& cfg, const CoordinateRun& run,
                      std::vector<ParamVector>& f, std::vector<WeightedTree>& trees,
                      TrainingFlags& flags, const std::function<void(int)>& after_iteration) {
  const std::size_t n = frame.y.size();
  const int k = run.k;
  std::vector<double> g(n, 0.0);
  std::vector<double> t(n, 0.0);
  std::vector<double> h(n, 0.0);
  std::vector<ParamVector> base;

  for (int m = 1; m <= cfg.iterations; ++m) {
    const std::uint64_t key = run.key_base + static_cast<std::uint64_t>(m);
    const auto rows = draw_subsample(n, cfg.subsample, cfg.seed, key);

    // DART: choose dropped trees and evaluate gradients without them.
    std::vector<std::size_t> dropped;
    if (cfg.dart.enabled && !trees.empty()) {
      KeyedRng rng(cfg.seed, Stream::kDart, key);
      if (rng.uniform() >= cfg.dart.skip_prob) {
        for (std::size_t j = 0; j < trees.size(); ++j) {
          if (rng.uniform() < cfg.dart.drop_rate) dropped.push_back(j);
        }
      }
    }
    const std::vector<ParamVector>* at = &f;
    if (!dropped.empty()) {
      base = f;
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        for (const std::size_t j : dropped) {
          base[i][k] -= trees[j].weight * trees[j].tree.predict_binned(frame.x, i);
        }
      }
      at = &base;
    }

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ri = 0; ri < static_cast<std::ptrdiff_t>(rows.size()); ++ri) {
      const std::size_t i = rows[static_cast<std::size_t>(ri)];
      const Derivatives d = linked_derivatives(dist, (*at)[i], frame.y[i], frame.offset(i));
      g[i] = -d.d1[static_cast<std::size_t>(k)];
      t[i] = d.d2[static_cast<std::size_t>(k)];
    }

    GrownTree grown = fit_tree(frame.bins, frame.x, g, rows, tree_params(cfg, rows.size(), key));
    if (run.line_search) {
      const LineSearchProblem problem{&dist, f, frame.y, frame.offsets, k};
      flags.clamped_leaves += line_search_leaf_values(grown, problem, rows);
    } else {
      const auto counts = newton_leaf_values(grown, g, t, rows, cfg.l2, step_bound(dist, k));
      flags.zero_hessian_leaves += counts.zero_hessian;
      flags.clamped_leaves += counts.clamped;
    }

    const double nk = static_cast<double>(dropped.size());
    const double weight = cfg.learning_rate / (nk + 1.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      h[i] = grown.tree.predict_binned(frame.x, i);
    }
    if (dropped.empty()) {
      for (std::size_t i = 0; i < n; ++i) f[i][k] += weight * h[i];
    } else {
      for (const std::size_t j : dropped) trees[j].weight *= nk / (nk + 1.0);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double v = base[i][k];
        for (const std::size_t j : dropped) {
          v += trees[j].weight * trees[j].tree.predict_binned(frame.x, i);
        }
        f[i][k] = v + weight * h[i];
      }
    }
    trees.push_back({std::move(grown.tree), weight});
    after_iteration(m);
  }
}

}  // namespace detail

namespace {

enum class PointAlgo { kGbm, kNewton };

BoostedModel train_point(const Dataset& train, const DistributionSpec& requested,
                         const BoostConfig& cfg, PointAlgo algo) {
  cfg.validate();
  if (requested.kappa != 1) throw ConfigError("point boosters model a single parameter");
  if (cfg.dart.enabled && algo != PointAlgo::kNewton) {
    throw ConfigError("dart is only available with the newton booster");
  }
  const TrainingFrame frame = TrainingFrame::build(train, requested, cfg.max_bins);
  const DistributionSpec dist = point_training_spec(requested, frame);

  BoostedModel model;
  model.dist = dist;
  model.exposure_scale = frame.exposure_scale;
  model.bins = frame.bins;
  model.init = init_mle(dist, frame.y, frame.offsets)[0];

  std::vector<ParamVector> f(frame.y.size());
  for (auto& p : f) p[0] = model.init;
  const detail::CoordinateRun run{0, 0, algo == PointAlgo::kGbm};
  detail::boost_coordinate(dist, frame, cfg, run, f, model.trees, model.flags, [&](int m) {
    model.history.push_back(detail::training_loss(dist, frame, f, m));
  });
  model.aux = detail::point_aux(dist, frame, f);
  return model;
}

}  // namespace

BoostedModel train_gbm(const Dataset& train, const DistributionSpec& dist, const BoostConfig& cfg) {
  return train_point(train, dist, cfg, PointAlgo::kGbm);
}

BoostedModel train_newton(const Dataset& train, const DistributionSpec& dist,
                          const BoostConfig& cfg) {
  return train_point(train, dist, cfg, PointAlgo::kNewton);
}

double BoostedModel::linked(const Dataset& ds, std::size_t row) const {
  double f = init;
  for (const auto& t : trees) f += t.weight * t.tree.predict_row(ds, row);
  return f;
}

std::vector<double> BoostedModel::linked(const Dataset& ds) const {
  std::vector<double> out(ds.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(ds.size()); ++i) {
    out[static_cast<std::size_t>(i)] = linked(ds, static_cast<std::size_t>(i));
  }
  return out;
}

double BoostedModel::predict(const Dataset& ds, std::size_t row) const {
  return detail::point_mean(dist, linked(ds, row),
                            exposure_ratio(dist, ds.exposure[row], exposure_scale), aux.value);
}

nlohmann::json BoostedModel::to_json() const {
  return {{"dist", detail::to_json(dist)},
          {"init", init},
          {"exposure_scale", exposure_scale},
          {"bins", bins.to_json()},
          {"trees", detail::to_json(trees)},
          {"aux", detail::to_json(aux)},
          {"history", detail::to_json(history)},
          {"flags", detail::to_json(flags)}};
}

BoostedModel BoostedModel::from_json(const nlohmann::json& j) {
  BoostedModel m;
  m.dist = detail::dist_from_json(j.at("dist"));
  m.init = j.at("init").get<double>();
  m.exposure_scale = j.at("exposure_scale").get<double>();
  m.bins = BinMap::from_json(j.at("bins"));
  m.trees = detail::trees_from_json(j.at("trees"));
  m.aux = detail::aux_from_json(j.at("aux"));
  m.history = detail::history_from_json(j.at("history"));
  m.flags = detail::flags_from_json(j.at("flags"));
  return m;
}

}  // namespace boostlab
