#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "boostlab/boost_point.hpp"
#include "boostlab/error.hpp"
#include "json_util.hpp"

namespace boostlab {

namespace {

// Coarse grouping of one feature's bins: group id per bin, groups ordered so
// that prefix cuts are meaningful (by value for numeric, by mean residual for
// categorical).
std::vector<std::size_t> coarse_groups(const BinMap::Feature& feature,
                                       std::span<const std::uint32_t> column,
                                       std::span<const double> residuals, std::size_t grid,
                                       std::size_t* num_groups) {
  const std::size_t nb = feature.num_bins();
  std::vector<double> count(nb, 0.0);
  std::vector<double> sum(nb, 0.0);
  for (std::size_t i = 0; i < column.size(); ++i) {
    count[column[i]] += 1.0;
    sum[column[i]] += residuals[i];
  }
  std::vector<std::size_t> order(nb);
  std::iota(order.begin(), order.end(), 0);
  if (feature.kind == FeatureKind::kCategorical) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double ma = count[a] > 0 ? sum[a] / count[a] : 0.0;
      const double mb = count[b] > 0 ? sum[b] / count[b] : 0.0;
      return ma < mb;
    });
  }
  std::vector<std::size_t> group(nb, 0);
  const auto n = static_cast<double>(column.size());
  if (nb <= grid) {
    for (std::size_t r = 0; r < nb; ++r) group[order[r]] = r;
    *num_groups = nb;
    return group;
  }
  double before = 0.0;
  for (const std::size_t b : order) {
    const double mid = before + 0.5 * count[b];
    group[b] = std::min(grid - 1, static_cast<std::size_t>(std::floor(static_cast<double>(grid) * mid / n)));
    before += count[b];
  }
  *num_groups = grid;
  return group;
}

double split_score(double s, double n) { return n > 0.0 ? s * s / n : 0.0; }

// Best value of sum over the two parts of S^2/N for one prefix cut of a
// vector of group sums; no cut when it does not help.
double best_cut(const std::vector<double>& s, const std::vector<double>& n) {
  const double st = std::accumulate(s.begin(), s.end(), 0.0);
  const double nt = std::accumulate(n.begin(), n.end(), 0.0);
  double best = split_score(st, nt);
  double sl = 0.0;
  double nl = 0.0;
  for (std::size_t c = 0; c + 1 < s.size(); ++c) {
    sl += s[c];
    nl += n[c];
    best = std::max(best, split_score(sl, nl) + split_score(st - sl, nt - nl));
  }
  return best;
}

// Cut the first axis, then cut the second axis separately on each side.
double nested_cut(const std::vector<std::vector<double>>& s,
                  const std::vector<std::vector<double>>& n) {
  const std::size_t ga = s.size();
  const std::size_t gb = s.front().size();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < ga; ++c) {
    std::vector<double> sl(gb, 0.0);
    std::vector<double> nl(gb, 0.0);
    std::vector<double> sr(gb, 0.0);
    std::vector<double> nr(gb, 0.0);
    for (std::size_t a = 0; a < ga; ++a) {
      auto& ts = a <= c ? sl : sr;
      auto& tn = a <= c ? nl : nr;
      for (std::size_t b = 0; b < gb; ++b) {
        ts[b] += s[a][b];
        tn[b] += n[a][b];
      }
    }
    best = std::max(best, best_cut(sl, nl) + best_cut(sr, nr));
  }
  return best;
}

std::string numeric_bound(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::string bin_range(const BinMap::Feature& f, std::uint32_t lo, std::uint32_t hi) {
  if (f.kind == FeatureKind::kNumeric) {
    const double inf = std::numeric_limits<double>::infinity();
    const double a = lo == 0 ? -inf : f.edges[lo - 1];
    const double b = hi >= f.edges.size() ? inf : f.edges[hi];
    return "(" + numeric_bound(a) + "," + numeric_bound(b) + "]";
  }
  std::string out = "{";
  for (std::uint32_t b = lo; b <= hi; ++b) {
    if (b > lo) out += "|";
    out += b < f.num_levels ? f.levels[b] : "*";
  }
  return out + "}";
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Maximal runs of equal consecutive values: (first, last) bin pairs.
std::vector<std::pair<std::uint32_t, std::uint32_t>> runs(std::span<const double> values) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  std::uint32_t start = 0;
  for (std::uint32_t b = 1; b <= values.size(); ++b) {
    if (b == values.size() || values[b] != values[start]) {
      out.emplace_back(start, b - 1);
      start = b;
    }
  }
  return out;
}

double leaf_value_for(const Tree& tree, const std::vector<std::uint32_t>& bin_of_feature) {
  std::size_t node = 0;
  while (!tree.nodes[node].is_leaf()) {
    const auto& n = tree.nodes[node];
    const auto f = static_cast<std::size_t>(n.feature);
    node = static_cast<std::size_t>(n.routes_left(bin_of_feature[f]) ? n.left : n.right);
  }
  return tree.nodes[node].value;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> fast_select(const TrainingFrame& frame,
                                                             std::span<const double> residuals,
                                                             std::size_t n_int,
                                                             std::size_t grid_bins) {
  const std::size_t p = frame.bins.features.size();
  if (n_int == 0 || p < 2) return {};
  if (grid_bins < 2) throw ConfigError("FAST grid needs at least 2 bins");
  const std::size_t n = frame.y.size();
  std::vector<std::vector<std::size_t>> groups(p);
  std::vector<std::size_t> num_groups(p, 0);
  for (std::size_t j = 0; j < p; ++j) {
    groups[j] = coarse_groups(frame.bins.features[j], frame.x.column(j), residuals, grid_bins,
                              &num_groups[j]);
  }
  const double total = std::accumulate(residuals.begin(), residuals.end(), 0.0);
  const double base = split_score(total, static_cast<double>(n));

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = a + 1; b < p; ++b) pairs.emplace_back(a, b);
  }
  std::vector<double> scores(pairs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(pairs.size()); ++pi) {
    const auto [a, b] = pairs[static_cast<std::size_t>(pi)];
    std::vector<std::vector<double>> s(num_groups[a], std::vector<double>(num_groups[b], 0.0));
    std::vector<std::vector<double>> c = s;
    const auto ca = frame.x.column(a);
    const auto cb = frame.x.column(b);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ga = groups[a][ca[i]];
      const std::size_t gb = groups[b][cb[i]];
      s[ga][gb] += residuals[i];
      c[ga][gb] += 1.0;
    }
    std::vector<std::vector<double>> st(num_groups[b], std::vector<double>(num_groups[a], 0.0));
    std::vector<std::vector<double>> ct = st;
    for (std::size_t i = 0; i < num_groups[a]; ++i) {
      for (std::size_t j = 0; j < num_groups[b]; ++j) {
        st[j][i] = s[i][j];
        ct[j][i] = c[i][j];
      }
    }
    scores[static_cast<std::size_t>(pi)] = std::max(nested_cut(s, c), nested_cut(st, ct)) - base;
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return scores[l] > scores[r]; });
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t r = 0; r < std::min(n_int, order.size()); ++r) out.push_back(pairs[order[r]]);
  return out;
}

EgbmModel train_egbm(const Dataset& train, const DistributionSpec& requested,
                     const BoostConfig& cfg) {
  cfg.validate();
  if (requested.kappa != 1) throw ConfigError("EGBM models a single parameter");
  if (cfg.dart.enabled) throw ConfigError("dart is not available with EGBM");
  const TrainingFrame frame = TrainingFrame::build(train, requested, cfg.max_bins);
  const DistributionSpec dist = point_training_spec(requested, frame);
  const std::size_t n = frame.y.size();
  const std::size_t p = frame.bins.features.size();

  EgbmModel model;
  model.dist = dist;
  model.exposure_scale = frame.exposure_scale;
  model.bins = frame.bins;
  model.intercept = init_mle(dist, frame.y, frame.offsets)[0];
  model.main_effects.resize(p);
  for (std::size_t j = 0; j < p; ++j) model.main_effects[j].assign(frame.bins.features[j].num_bins(), 0.0);

  std::vector<ParamVector> f(n);
  for (auto& v : f) v[0] = model.intercept;
  std::vector<double> g(n, 0.0);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);

  const auto gradients = [&] {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      g[i] = -linked_derivatives(dist, f[i], frame.y[i], frame.offset(i)).d1[0];
    }
  };
  // Fits one tree restricted to `allowed` with line-search leaves; returns
  // false when the tree could not split.
  const auto fit_restricted = [&](const std::vector<std::size_t>& allowed, int depth,
                                  std::uint64_t key, GrownTree* out) {
    gradients();
    TreeParams tp;
    tp.max_depth = depth;
    tp.min_leaf = cfg.min_leaf_rows(n);
    tp.min_gain = cfg.min_gain;
    tp.seed = cfg.seed;
    tp.iteration = key;
    tp.allowed_features = allowed;
    *out = fit_tree(frame.bins, frame.x, g, rows, tp);
    if (out->tree.num_leaves() < 2) return false;
    const LineSearchProblem problem{&dist, f, frame.y, frame.offsets, 0};
    model.flags.clamped_leaves += line_search_leaf_values(*out, problem, rows);
    return true;
  };

  int record = 0;
  std::vector<std::uint32_t> bin_of(p, 0);
  for (int m = 1; m <= cfg.iterations; ++m) {
    for (std::size_t k = 0; k < p; ++k) {
      GrownTree grown;
      if (!fit_restricted({k}, 1, static_cast<std::uint64_t>(m), &grown)) continue;
      auto& table = model.main_effects[k];
      for (std::uint32_t b = 0; b < table.size(); ++b) {
        bin_of[k] = b;
        table[b] += cfg.learning_rate * leaf_value_for(grown.tree, bin_of);
      }
      for (std::size_t i = 0; i < n; ++i) {
        f[i][0] += cfg.learning_rate * grown.tree.nodes[static_cast<std::size_t>(grown.leaf_of_row[i])].value;
      }
    }
    model.history.push_back(detail::training_loss(dist, frame, f, ++record));
  }

  if (cfg.interactions > 0) {
    gradients();
    model.pairs = fast_select(frame, g, static_cast<std::size_t>(cfg.interactions),
                              cfg.interaction_bins);
    for (const auto& [a, b] : model.pairs) {
      model.interactions.emplace_back(
          frame.bins.features[a].num_bins() * frame.bins.features[b].num_bins(), 0.0);
    }
    for (int m = 1; m <= cfg.iterations; ++m) {
      for (std::size_t q = 0; q < model.pairs.size(); ++q) {
        const auto [a, b] = model.pairs[q];
        GrownTree grown;
        if (!fit_restricted({a, b}, 2, static_cast<std::uint64_t>(m), &grown)) continue;
        const std::size_t nbb = frame.bins.features[b].num_bins();
        auto& table = model.interactions[q];
        for (std::uint32_t ba = 0; ba < frame.bins.features[a].num_bins(); ++ba) {
          for (std::uint32_t bb = 0; bb < nbb; ++bb) {
            bin_of[a] = ba;
            bin_of[b] = bb;
            table[ba * nbb + bb] += cfg.learning_rate * leaf_value_for(grown.tree, bin_of);
          }
        }
        for (std::size_t i = 0; i < n; ++i) {
          f[i][0] += cfg.learning_rate * grown.tree.nodes[static_cast<std::size_t>(grown.leaf_of_row[i])].value;
        }
      }
      model.history.push_back(detail::training_loss(dist, frame, f, ++record));
    }
  }
  model.aux = detail::point_aux(dist, frame, f);
  return model;
}

double EgbmModel::linked(const Dataset& ds, std::size_t row) const {
  if (ds.num_features() != bins.features.size()) {
    throw DataError("EGBM model expects " + std::to_string(bins.features.size()) + " features");
  }
  double f = intercept;
  std::vector<std::uint32_t> bin_of(bins.features.size());
  for (std::size_t j = 0; j < bins.features.size(); ++j) {
    bin_of[j] = bins.features[j].bin(ds.features[j].values[row]);
    f += main_effects[j][bin_of[j]];
  }
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    const auto [a, b] = pairs[q];
    f += interactions[q][bin_of[a] * bins.features[b].num_bins() + bin_of[b]];
  }
  return f;
}

std::vector<double> EgbmModel::linked(const Dataset& ds) const {
  std::vector<double> out(ds.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(ds.size()); ++i) {
    out[static_cast<std::size_t>(i)] = linked(ds, static_cast<std::size_t>(i));
  }
  return out;
}

double EgbmModel::predict(const Dataset& ds, std::size_t row) const {
  return detail::point_mean(dist, linked(ds, row),
                            exposure_ratio(dist, ds.exposure[row], exposure_scale), aux.value);
}

void EgbmModel::write_lookup_csv(std::ostream& out) const {
  std::ostringstream value;
  value.precision(17);
  const auto fmt = [&](double v) {
    value.str("");
    value << v;
    return value.str();
  };
  out << "term,feature_a,range_a,feature_b,range_b,value\n";
  out << "intercept,,,,," << fmt(intercept) << '\n';
  for (std::size_t j = 0; j < main_effects.size(); ++j) {
    const auto& feature = bins.features[j];
    for (const auto& [lo, hi] : runs(main_effects[j])) {
      out << "main," << csv_field(feature.name) << ',' << csv_field(bin_range(feature, lo, hi))
          << ",,," << fmt(main_effects[j][lo]) << '\n';
    }
  }
  for (std::size_t q = 0; q < pairs.size(); ++q) {
    const auto& fa = bins.features[pairs[q].first];
    const auto& fb = bins.features[pairs[q].second];
    const std::size_t na = fa.num_bins();
    const std::size_t nb = fb.num_bins();
    const std::span<const double> table(interactions[q]);
    std::uint32_t start = 0;
    for (std::uint32_t ba = 1; ba <= na; ++ba) {
      const bool same = ba < na && std::equal(table.begin() + ba * nb, table.begin() + (ba + 1) * nb,
                                              table.begin() + start * nb);
      if (same) continue;
      const auto row = table.subspan(start * nb, nb);
      for (const auto& [lo, hi] : runs(row)) {
        out << "interaction," << csv_field(fa.name) << ',' << csv_field(bin_range(fa, start, ba - 1))
            << ',' << csv_field(fb.name) << ',' << csv_field(bin_range(fb, lo, hi)) << ','
            << fmt(row[lo]) << '\n';
      }
      start = ba;
    }
  }
}

nlohmann::json EgbmModel::to_json() const {
  nlohmann::json pj = nlohmann::json::array();
  for (const auto& [a, b] : pairs) pj.push_back({a, b});
  return {{"dist", detail::to_json(dist)},
          {"intercept", intercept},
          {"exposure_scale", exposure_scale},
          {"bins", bins.to_json()},
          {"main_effects", main_effects},
          {"pairs", pj},
          {"interactions", interactions},
          {"aux", detail::to_json(aux)},
          {"history", detail::to_json(history)},
          {"flags", detail::to_json(flags)}};
}

EgbmModel EgbmModel::from_json(const nlohmann::json& j) {
  EgbmModel m;
  m.dist = detail::dist_from_json(j.at("dist"));
  m.intercept = j.at("intercept").get<double>();
  m.exposure_scale = j.at("exposure_scale").get<double>();
  m.bins = BinMap::from_json(j.at("bins"));
  m.main_effects = j.at("main_effects").get<std::vector<std::vector<double>>>();
  for (const auto& pr : j.at("pairs")) {
    m.pairs.emplace_back(pr.at(0).get<std::size_t>(), pr.at(1).get<std::size_t>());
  }
  m.interactions = j.at("interactions").get<std::vector<std::vector<double>>>();
  m.aux = detail::aux_from_json(j.at("aux"));
  m.history = detail::history_from_json(j.at("history"));
  m.flags = detail::flags_from_json(j.at("flags"));
  if (m.main_effects.size() != m.bins.features.size() || m.interactions.size() != m.pairs.size()) {
    throw DataError("inconsistent EGBM model tables");
  }
  return m;
}

}  // namespace boostlab
