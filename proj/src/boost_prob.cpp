#include "boostlab/boost_prob.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "boostlab/error.hpp"
#include "boostlab/optimize.hpp"
#include "json_util.hpp"

namespace boostlab {

void LssConfig::validate() const {
  boost.validate();
  if (q_max < 0) throw ConfigError("q_max must be non-negative");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
}

void CycConfig::validate() const {
  boost.validate();
  for (const auto& p : params) {
    if (p.iterations < 0) throw ConfigError("per-parameter iterations must be non-negative");
    if (p.depth < 0) throw ConfigError("per-parameter depth must be non-negative");
    if (!(p.learning_rate > 0.0 && p.learning_rate <= 1.0)) {
      throw ConfigError("per-parameter learning_rate must lie in (0, 1]");
    }
  }
}

namespace {

void require_two_parameters(const DistributionSpec& dist) {
  if (dist.kappa != 2) {
    throw ConfigError("probabilistic boosters need a two-parameter family, got " +
                      to_string(dist.family) + " with kappa " + std::to_string(dist.kappa));
  }
  dist.validate();
}

double total_nll(const DistributionSpec& dist, const TrainingFrame& frame,
                 const std::vector<ParamVector>& f) {
  const std::size_t n = frame.y.size();
  std::vector<double> values(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    values[i] = nll(dist, f[i], frame.y[i], frame.offset(i));
  }
  return std::accumulate(values.begin(), values.end(), 0.0);
}

ProbModel empty_model(const DistributionSpec& dist, const TrainingFrame& frame) {
  ProbModel model;
  model.dist = dist;
  model.exposure_scale = frame.exposure_scale;
  model.bins = frame.bins;
  model.init = init_mle(dist, frame.y, frame.offsets);
  return model;
}

std::vector<ParamVector> constant_state(const ParamVector& init, std::size_t n) {
  return std::vector<ParamVector>(n, init);
}

TreeParams base_tree_params(const BoostConfig& cfg, std::size_t n, int depth,
                            std::uint64_t iteration) {
  TreeParams tp;
  tp.max_depth = depth;
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

ProbModel train_lss(const Dataset& train, const DistributionSpec& dist, const LssConfig& cfg) {
  cfg.validate();
  require_two_parameters(dist);
  const TrainingFrame frame = TrainingFrame::build(train, dist, cfg.boost.max_bins);
  const std::size_t n = frame.y.size();
  ProbModel model = empty_model(dist, frame);

  // latest[j]: most recent complete prediction function of parameter j.
  std::array<std::vector<double>, 2> latest;
  for (int j = 0; j < 2; ++j) latest[j].assign(n, model.init[j]);
  double previous = std::numeric_limits<double>::infinity();
  int record = 0;

  for (int q = 0; q <= cfg.q_max; ++q) {
    std::array<std::vector<WeightedTree>, 2> cycle_trees;
    std::array<std::vector<double>, 2> cycle_latest = latest;
    TrainingFlags cycle_flags = model.flags;
    std::vector<LossRecord> cycle_history;
    for (int k = 0; k < 2; ++k) {
      std::vector<ParamVector> f = constant_state(model.init, n);
      if (q > 0) {
        const int j = 1 - k;
        for (std::size_t i = 0; i < n; ++i) f[i][j] = cycle_latest[j][i];
      }
      const std::uint64_t key_base = (static_cast<std::uint64_t>(q) * 2 + static_cast<std::uint64_t>(k)) << 32;
      const detail::CoordinateRun run{k, key_base, false};
      detail::boost_coordinate(dist, frame, cfg.boost, run, f, cycle_trees[k], cycle_flags,
                               [&](int) {
                                 cycle_history.push_back(
                                     detail::training_loss(dist, frame, f, ++record));
                               });
      for (std::size_t i = 0; i < n; ++i) cycle_latest[k][i] = f[i][k];
    }

    std::vector<ParamVector> state(n);
    for (std::size_t i = 0; i < n; ++i) {
      state[i] = model.init;
      state[i][0] = cycle_latest[0][i];
      state[i][1] = cycle_latest[1][i];
    }
    const double total = total_nll(dist, frame, state);
    if (!std::isfinite(total)) {
      throw NumericalError("non-finite training loss after cycle " + std::to_string(q));
    }
    if (q > 0 && total > previous) {
      model.flags.stopped_on_worse_cycle = true;
      break;
    }
    model.trees = std::move(cycle_trees);
    model.flags = cycle_flags;
    model.flags.cycles = q + 1;
    model.history.insert(model.history.end(), cycle_history.begin(), cycle_history.end());
    latest = std::move(cycle_latest);
    const bool converged = q > 0 && (previous - total) < cfg.tol * std::fabs(previous);
    previous = total;
    if (converged) break;
  }
  return model;
}

ProbModel train_cyc(const Dataset& train, const DistributionSpec& dist, const CycConfig& cfg) {
  cfg.validate();
  require_two_parameters(dist);
  const TrainingFrame frame = TrainingFrame::build(train, dist, cfg.boost.max_bins);
  const std::size_t n = frame.y.size();
  ProbModel model = empty_model(dist, frame);
  std::vector<ParamVector> f = constant_state(model.init, n);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<double> g(n, 0.0);

  const int total_iterations = std::max(cfg.params[0].iterations, cfg.params[1].iterations);
  for (int m = 1; m <= total_iterations; ++m) {
    for (int k = 0; k < 2; ++k) {
      const CycParam& p = cfg.params[static_cast<std::size_t>(k)];
      if (m > p.iterations) continue;
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        g[i] = -linked_derivatives(dist, f[i], frame.y[i], frame.offset(i))
                    .d1[static_cast<std::size_t>(k)];
      }
      const std::uint64_t key = static_cast<std::uint64_t>(m) * 2 + static_cast<std::uint64_t>(k);
      GrownTree grown =
          fit_tree(frame.bins, frame.x, g, rows, base_tree_params(cfg.boost, n, p.depth, key));
      const LineSearchProblem problem{&dist, f, frame.y, frame.offsets, k};
      model.flags.clamped_leaves += line_search_leaf_values(grown, problem, rows);
      for (std::size_t i = 0; i < n; ++i) {
        f[i][k] += p.learning_rate *
                   grown.tree.nodes[static_cast<std::size_t>(grown.leaf_of_row[i])].value;
      }
      model.trees[static_cast<std::size_t>(k)].push_back({std::move(grown.tree), p.learning_rate});
    }
    model.history.push_back(detail::training_loss(dist, frame, f, m));
  }
  return model;
}

ProbModel train_ngboost(const Dataset& train, const DistributionSpec& dist,
                        const BoostConfig& cfg) {
  cfg.validate();
  if (cfg.dart.enabled) throw ConfigError("dart is not available with natural gradient boosting");
  require_two_parameters(dist);
  const TrainingFrame frame = TrainingFrame::build(train, dist, cfg.max_bins);
  const std::size_t n = frame.y.size();
  ProbModel model = empty_model(dist, frame);
  std::vector<ParamVector> f = constant_state(model.init, n);
  std::array<std::vector<double>, 2> g{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  std::array<std::vector<double>, 2> h{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  std::vector<std::uint8_t> fallback(n, 0);
  std::vector<double> per_row(n);

  const auto loss_at = [&](double rho) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      ParamVector p = f[i];
      p[0] += rho * h[0][i];
      p[1] += rho * h[1][i];
      const double v = nll(dist, p, frame.y[i], frame.offset(i));
      per_row[i] = std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    }
    return std::accumulate(per_row.begin(), per_row.end(), 0.0);
  };

  for (int m = 1; m <= cfg.iterations; ++m) {
    const auto rows = draw_subsample(n, cfg.subsample, cfg.seed, static_cast<std::uint64_t>(m));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ri = 0; ri < static_cast<std::ptrdiff_t>(rows.size()); ++ri) {
      const std::size_t i = rows[static_cast<std::size_t>(ri)];
      const NaturalGradient ng = natural_gradient(dist, f[i], frame.y[i], frame.offset(i));
      g[0][i] = -ng.direction[0];
      g[1][i] = -ng.direction[1];
      fallback[i] = ng.fallback ? 1 : 0;
    }
    for (const std::size_t i : rows) model.flags.fisher_fallbacks += fallback[i];

    std::array<Tree, 2> trees;
    for (int k = 0; k < 2; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const std::uint64_t key = static_cast<std::uint64_t>(m) * 2 + ku;
      GrownTree grown = fit_tree(frame.bins, frame.x, g[ku], rows,
                                 base_tree_params(cfg, rows.size(), cfg.depth, key));
      trees[ku] = std::move(grown.tree);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        h[ku][i] = trees[ku].predict_binned(frame.x, i);
      }
    }

    double rho = golden_section(loss_at, 0.0, 10.0);
    // Newton polish with the analytic directional derivatives.
    {
      double s1 = 0.0;
      double s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        ParamVector p = f[i];
        p[0] += rho * h[0][i];
        p[1] += rho * h[1][i];
        const Derivatives d = linked_derivatives(dist, p, frame.y[i], frame.offset(i));
        s1 += d.d1[0] * h[0][i] + d.d1[1] * h[1][i];
        s2 += d.d2[0] * h[0][i] * h[0][i] + 2.0 * d.cross * h[0][i] * h[1][i] +
              d.d2[1] * h[1][i] * h[1][i];
      }
      if (s2 > 0.0 && std::isfinite(s1) && std::isfinite(s2)) {
        const double candidate = rho - s1 / s2;
        if (candidate >= 0.0 && candidate <= 10.0 && loss_at(candidate) <= loss_at(rho)) {
          rho = candidate;
        }
      }
    }

    const double weight = cfg.learning_rate * rho;
    for (std::size_t i = 0; i < n; ++i) {
      f[i][0] += weight * h[0][i];
      f[i][1] += weight * h[1][i];
    }
    model.trees[0].push_back({std::move(trees[0]), weight});
    model.trees[1].push_back({std::move(trees[1]), weight});
    model.rho.push_back(rho);
    model.history.push_back(detail::training_loss(dist, frame, f, m));
  }
  return model;
}

ParamVector ProbModel::linked(const Dataset& ds, std::size_t row) const {
  ParamVector p = init;
  for (std::size_t k = 0; k < 2; ++k) {
    for (const auto& t : trees[k]) p[static_cast<int>(k)] += t.weight * t.tree.predict_row(ds, row);
  }
  return p;
}

double ProbModel::offset(const Dataset& ds, std::size_t row) const {
  return dist.uses_offset() ? std::log(ds.exposure[row] / exposure_scale) : 0.0;
}

Natural ProbModel::predict(const Dataset& ds, std::size_t row) const {
  return to_natural(dist, linked(ds, row), offset(ds, row));
}

nlohmann::json ProbModel::to_json() const {
  return {{"dist", detail::to_json(dist)},
          {"init", detail::to_json(init)},
          {"exposure_scale", exposure_scale},
          {"bins", bins.to_json()},
          {"trees", {detail::to_json(trees[0]), detail::to_json(trees[1])}},
          {"rho", rho},
          {"history", detail::to_json(history)},
          {"flags", detail::to_json(flags)}};
}

ProbModel ProbModel::from_json(const nlohmann::json& j) {
  ProbModel m;
  m.dist = detail::dist_from_json(j.at("dist"));
  m.init = detail::param_from_json(j.at("init"));
  m.exposure_scale = j.at("exposure_scale").get<double>();
  m.bins = BinMap::from_json(j.at("bins"));
  const auto& trees = j.at("trees");
  if (!trees.is_array() || trees.size() != 2) throw DataError("model needs two tree lists");
  m.trees[0] = detail::trees_from_json(trees[0]);
  m.trees[1] = detail::trees_from_json(trees[1]);
  m.rho = j.at("rho").get<std::vector<double>>();
  m.history = detail::history_from_json(j.at("history"));
  m.flags = detail::flags_from_json(j.at("flags"));
  return m;
}

}  // namespace boostlab
