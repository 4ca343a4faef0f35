#include "boostlab/tree.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>

#include "boostlab/error.hpp"
#include "boostlab/optimize.hpp"
#include "boostlab/random.hpp"

namespace boostlab {

std::uint32_t BinMap::Feature::bin(double x) const {
  if (kind == FeatureKind::kCategorical) {
    const double code = x < 0.0 ? static_cast<double>(num_levels) : x;
    return static_cast<std::uint32_t>(std::min(code, static_cast<double>(num_levels)));
  }
  return static_cast<std::uint32_t>(std::lower_bound(edges.begin(), edges.end(), x) -
                                    edges.begin());
}

nlohmann::json BinMap::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& f : features) {
    nlohmann::json j{{"name", f.name}, {"kind", to_string(f.kind)}};
    if (f.kind == FeatureKind::kNumeric) {
      j["edges"] = f.edges;
    } else {
      j["num_levels"] = f.num_levels;
      j["levels"] = f.levels;
    }
    out.push_back(std::move(j));
  }
  return out;
}

BinMap BinMap::from_json(const nlohmann::json& j) {
  BinMap bins;
  for (const auto& item : j) {
    Feature f;
    f.name = item.at("name").get<std::string>();
    f.kind = parse_feature_kind(item.at("kind").get<std::string>());
    if (f.kind == FeatureKind::kNumeric) {
      f.edges = item.at("edges").get<std::vector<double>>();
    } else {
      f.num_levels = item.at("num_levels").get<std::size_t>();
      f.levels = item.at("levels").get<std::vector<std::string>>();
    }
    bins.features.push_back(std::move(f));
  }
  return bins;
}

BinMap build_bins(const Dataset& ds, std::size_t max_bins) {
  if (max_bins < 2) throw ConfigError("max_bins must be at least 2");
  BinMap bins;
  for (const auto& column : ds.features) {
    BinMap::Feature f;
    f.name = column.name;
    f.kind = column.kind;
    if (column.categorical()) {
      f.num_levels = column.num_levels();
      f.levels = column.levels;
      bins.features.push_back(std::move(f));
      continue;
    }
    std::vector<double> sorted = column.values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> unique = sorted;
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    auto midpoint = [&](std::size_t j) {
      const double a = unique[j - 1];
      const double b = unique[j];
      const double mid = a + 0.5 * (b - a);
      return mid >= b ? a : mid;
    };
    if (unique.size() <= max_bins) {
      for (std::size_t j = 1; j < unique.size(); ++j) f.edges.push_back(midpoint(j));
    } else {
      const std::size_t n = sorted.size();
      for (std::size_t k = 1; k < max_bins; ++k) {
        const double q = sorted[k * n / max_bins];
        const auto j = static_cast<std::size_t>(
            std::lower_bound(unique.begin(), unique.end(), q) - unique.begin());
        if (j == 0) continue;
        const double edge = midpoint(j);
        if (f.edges.empty() || edge > f.edges.back()) f.edges.push_back(edge);
      }
    }
    bins.features.push_back(std::move(f));
  }
  return bins;
}

BinnedMatrix bin_dataset(const BinMap& bins, const Dataset& ds) {
  if (bins.features.size() != ds.num_features()) {
    throw DataError("bin map has " + std::to_string(bins.features.size()) +
                    " features, data has " + std::to_string(ds.num_features()));
  }
  BinnedMatrix x;
  x.rows = ds.size();
  x.cols = ds.num_features();
  x.data.resize(x.rows * x.cols);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(x.cols); ++j) {
    const auto& f = bins.features[static_cast<std::size_t>(j)];
    const auto& values = ds.features[static_cast<std::size_t>(j)].values;
    std::uint32_t* out = x.data.data() + static_cast<std::size_t>(j) * x.rows;
    for (std::size_t i = 0; i < x.rows; ++i) out[i] = f.bin(values[i]);
  }
  return x;
}

std::size_t Tree::num_leaves() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int Tree::depth() const {
  int d = 0;
  for (const auto& n : nodes) d = std::max(d, n.depth);
  return d;
}

int Tree::leaf_for_binned(const BinnedMatrix& x, std::size_t row) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const TreeNode& node = nodes[static_cast<std::size_t>(i)];
    i = node.routes_left(x.at(row, static_cast<std::size_t>(node.feature))) ? node.left
                                                                           : node.right;
  }
  return i;
}

int Tree::leaf_for_row(const Dataset& ds, std::size_t row) const {
  int i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const TreeNode& node = nodes[static_cast<std::size_t>(i)];
    const double v = ds.features[static_cast<std::size_t>(node.feature)].values[row];
    bool left = false;
    if (node.left_bins.empty()) {
      left = v <= node.threshold;
    } else {
      const double last = static_cast<double>(node.left_bins.size() - 1);
      const double code = v < 0.0 ? last : std::min(v, last);
      left = node.left_bins[static_cast<std::size_t>(code)] != 0;
    }
    i = left ? node.left : node.right;
  }
  return i;
}

nlohmann::json Tree::to_json() const {
  nlohmann::json feature = nlohmann::json::array();
  nlohmann::json threshold = nlohmann::json::array();
  nlohmann::json threshold_bin = nlohmann::json::array();
  nlohmann::json left_bins = nlohmann::json::array();
  nlohmann::json left = nlohmann::json::array();
  nlohmann::json right = nlohmann::json::array();
  nlohmann::json value = nlohmann::json::array();
  nlohmann::json depth = nlohmann::json::array();
  nlohmann::json count = nlohmann::json::array();
  for (const auto& n : nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    threshold_bin.push_back(n.threshold_bin);
    left_bins.push_back(n.left_bins);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
    depth.push_back(n.depth);
    count.push_back(n.count);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"threshold_bin", threshold_bin},
          {"left_bins", left_bins}, {"left", left},     {"right", right},
          {"value", value},     {"depth", depth},         {"count", count}};
}

Tree Tree::from_json(const nlohmann::json& j) {
  Tree t;
  const std::size_t n = j.at("feature").size();
  t.nodes.assign(n, TreeNode{});
  for (std::size_t i = 0; i < n; ++i) {
    TreeNode& node = t.nodes[i];
    node.feature = j.at("feature")[i].get<int>();
    node.threshold = j.at("threshold")[i].get<double>();
    node.threshold_bin = j.at("threshold_bin")[i].get<std::uint32_t>();
    node.left_bins = j.at("left_bins")[i].get<std::vector<std::uint8_t>>();
    node.left = j.at("left")[i].get<int>();
    node.right = j.at("right")[i].get<int>();
    node.value = j.at("value")[i].get<double>();
    node.depth = j.at("depth")[i].get<int>();
    node.count = j.at("count")[i].get<std::size_t>();
  }
  if (t.nodes.empty()) throw DataError("tree without nodes");
  return t;
}

bool Tree::operator==(const Tree& other) const {
  if (nodes.size() != other.nodes.size()) return false;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& a = nodes[i];
    const TreeNode& b = other.nodes[i];
    if (a.feature != b.feature || a.threshold_bin != b.threshold_bin ||
        a.left_bins != b.left_bins || a.left != b.left || a.right != b.right ||
        a.depth != b.depth || a.count != b.count) {
      return false;
    }
    // Bitwise comparison: the tests demand identical trees, not close ones.
    if (std::memcmp(&a.threshold, &b.threshold, sizeof(double)) != 0 ||
        std::memcmp(&a.value, &b.value, sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

std::string to_string(Growth growth) {
  return growth == Growth::kDepthWise ? "depthwise" : "leafwise";
}

Growth parse_growth(std::string_view text) {
  if (text == "depthwise" || text == "depth-wise" || text == "depth") return Growth::kDepthWise;
  if (text == "leafwise" || text == "leaf-wise" || text == "leaf") return Growth::kLeafWise;
  throw ConfigError("unknown growth policy '" + std::string(text) + "'");
}

std::vector<std::size_t> sample_columns(std::size_t num_features,
                                        const std::vector<std::size_t>& allowed, double fraction,
                                        std::uint64_t seed, std::uint64_t iteration) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("column fraction must lie in (0, 1]");
  }
  std::vector<std::size_t> pool = allowed;
  if (pool.empty()) {
    pool.resize(num_features);
    std::iota(pool.begin(), pool.end(), 0);
  }
  const std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pool.size()) + 1e-9)));
  if (k >= pool.size()) return pool;
  KeyedRng rng(seed, Stream::kColumns, iteration);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

namespace {

struct Split {
  double gain = -std::numeric_limits<double>::infinity();
  std::size_t feature = 0;
  std::uint32_t bin = 0;
  std::vector<std::uint8_t> left_bins;
  bool valid = false;
};

struct NodeWork {
  int node = 0;
  std::vector<std::size_t> positions;  // indices into `rows`
  Split split;
};

class Grower {
 public:
  Grower(const BinMap& bins, const BinnedMatrix& x, std::span<const double> g,
         std::span<const std::size_t> rows, const TreeParams& params)
      : bins_(bins), x_(x), g_(g), rows_(rows), params_(params) {
    features_ = sample_columns(bins.features.size(), params.allowed_features,
                               params.col_fraction, params.seed, params.iteration);
    std::erase_if(features_, [&](std::size_t j) { return bins.features[j].num_bins() < 2; });
  }

  Split best_split(const std::vector<std::size_t>& positions) const {
    Split best;
    const std::size_t n = positions.size();
    if (n < 2 * params_.min_leaf || features_.empty()) return best;
    double total = 0.0;
    double sumsq = 0.0;
    for (const std::size_t p : positions) {
      const double v = g_[rows_[p]];
      total += v;
      sumsq += v * v;
    }
    if (!(sumsq > 0.0)) return best;
    const double base = total * total / static_cast<double>(n);
    const double threshold = std::max(params_.min_gain, 1e-12 * sumsq);

    std::vector<Split> per_feature(features_.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t fi = 0; fi < static_cast<std::ptrdiff_t>(features_.size()); ++fi) {
      per_feature[static_cast<std::size_t>(fi)] =
          scan_feature(features_[static_cast<std::size_t>(fi)], positions, total, base);
    }
    for (auto& s : per_feature) {
      if (s.valid && s.gain > threshold && s.gain > best.gain) best = std::move(s);
    }
    return best;
  }

  GrownTree grow() {
    GrownTree out;
    Tree& tree = out.tree;
    NodeWork root;
    root.positions.resize(rows_.size());
    std::iota(root.positions.begin(), root.positions.end(), 0);
    set_leaf(tree.nodes[0], root.positions, 0);

    std::size_t max_leaves = params_.max_leaves;
    std::vector<NodeWork> finished;
    std::vector<NodeWork> open;
    if (params_.max_depth > 0) {
      root.split = best_split(root.positions);
      open.push_back(std::move(root));
    } else {
      finished.push_back(std::move(root));
    }
    std::size_t leaves = 1;

    while (!open.empty()) {
      // Depth-wise takes the oldest open node; leaf-wise the one with the
      // largest gain (earliest on ties).
      std::size_t pick = 0;
      if (params_.growth == Growth::kLeafWise) {
        for (std::size_t i = 1; i < open.size(); ++i) {
          if (open[i].split.valid &&
              (!open[pick].split.valid || open[i].split.gain > open[pick].split.gain)) {
            pick = i;
          }
        }
      }
      NodeWork work = std::move(open[pick]);
      open.erase(open.begin() + static_cast<std::ptrdiff_t>(pick));
      const bool room = max_leaves == 0 || leaves < max_leaves;
      if (!work.split.valid || !room) {
        finished.push_back(std::move(work));
        continue;
      }
      auto [left, right] = apply_split(tree, work);
      ++leaves;
      for (NodeWork* child : {&left, &right}) {
        const int depth = tree.nodes[static_cast<std::size_t>(child->node)].depth;
        if (depth < params_.max_depth) child->split = best_split(child->positions);
        open.push_back(std::move(*child));
      }
    }

    out.leaf_of_row.assign(rows_.size(), 0);
    for (const auto& work : finished) {
      for (const std::size_t p : work.positions) out.leaf_of_row[p] = work.node;
    }
    return out;
  }

 private:
  Split scan_feature(std::size_t j, const std::vector<std::size_t>& positions, double total,
                     double base) const {
    const auto& feature = bins_.features[j];
    const std::size_t nb = feature.num_bins();
    std::vector<double> sum(nb, 0.0);
    std::vector<std::size_t> cnt(nb, 0);
    const auto col = x_.column(j);
    for (const std::size_t p : positions) {
      const std::size_t r = rows_[p];
      const std::uint32_t b = col[r];
      sum[b] += g_[r];
      ++cnt[b];
    }
    const std::size_t n = positions.size();
    Split best;
    best.feature = j;
    auto consider = [&](double sl, std::size_t nl) {
      const std::size_t nr = n - nl;
      if (nl < params_.min_leaf || nr < params_.min_leaf) return false;
      const double sr = total - sl;
      const double gain = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr) -
                          base;
      if (gain > best.gain) {
        best.gain = gain;
        best.valid = true;
        return true;
      }
      return false;
    };

    if (feature.kind == FeatureKind::kNumeric) {
      double sl = 0.0;
      std::size_t nl = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        sl += sum[b];
        nl += cnt[b];
        if (cnt[b] == 0) continue;
        if (consider(sl, nl)) best.bin = static_cast<std::uint32_t>(b);
      }
      return best;
    }

    std::vector<std::size_t> order;
    for (std::size_t b = 0; b < nb; ++b) {
      if (cnt[b] > 0) order.push_back(b);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return sum[a] / static_cast<double>(cnt[a]) < sum[b] / static_cast<double>(cnt[b]);
    });
    double sl = 0.0;
    std::size_t nl = 0;
    std::size_t best_prefix = 0;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      sl += sum[order[i]];
      nl += cnt[order[i]];
      if (consider(sl, nl)) best_prefix = i + 1;
    }
    if (best.valid) {
      std::size_t n_left = 0;
      for (std::size_t i = 0; i < best_prefix; ++i) n_left += cnt[order[i]];
      const std::uint8_t absent_side = n_left >= n - n_left ? 1 : 0;
      best.left_bins.assign(nb, absent_side);
      for (std::size_t i = 0; i < order.size(); ++i) {
        best.left_bins[order[i]] = i < best_prefix ? 1 : 0;
      }
    }
    return best;
  }

  void set_leaf(TreeNode& node, const std::vector<std::size_t>& positions, int depth) const {
    double s = 0.0;
    for (const std::size_t p : positions) s += g_[rows_[p]];
    node.feature = -1;
    node.depth = depth;
    node.count = positions.size();
    node.value = positions.empty() ? 0.0 : s / static_cast<double>(positions.size());
  }

  std::pair<NodeWork, NodeWork> apply_split(Tree& tree, NodeWork& work) const {
    const Split& s = work.split;
    const auto col = x_.column(s.feature);
    NodeWork left;
    NodeWork right;
    for (const std::size_t p : work.positions) {
      const std::uint32_t b = col[rows_[p]];
      const bool go_left = s.left_bins.empty() ? b <= s.bin : s.left_bins[b] != 0;
      (go_left ? left : right).positions.push_back(p);
    }
    const int depth = tree.nodes[static_cast<std::size_t>(work.node)].depth + 1;
    left.node = static_cast<int>(tree.nodes.size());
    right.node = left.node + 1;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    set_leaf(tree.nodes[static_cast<std::size_t>(left.node)], left.positions, depth);
    set_leaf(tree.nodes[static_cast<std::size_t>(right.node)], right.positions, depth);

    TreeNode& node = tree.nodes[static_cast<std::size_t>(work.node)];
    node.feature = static_cast<int>(s.feature);
    node.threshold_bin = s.bin;
    node.left_bins = s.left_bins;
    const auto& feature = bins_.features[s.feature];
    node.threshold = feature.kind == FeatureKind::kNumeric ? feature.edges[s.bin] : 0.0;
    node.left = left.node;
    node.right = right.node;
    return {std::move(left), std::move(right)};
  }

  const BinMap& bins_;
  const BinnedMatrix& x_;
  std::span<const double> g_;
  std::span<const std::size_t> rows_;
  const TreeParams& params_;
  std::vector<std::size_t> features_;
};

std::vector<std::vector<std::size_t>> leaf_groups(const GrownTree& grown) {
  std::vector<std::vector<std::size_t>> groups(grown.tree.nodes.size());
  for (std::size_t p = 0; p < grown.leaf_of_row.size(); ++p) {
    groups[static_cast<std::size_t>(grown.leaf_of_row[p])].push_back(p);
  }
  return groups;
}

}  // namespace

GrownTree fit_tree(const BinMap& bins, const BinnedMatrix& x, std::span<const double> g,
                   std::span<const std::size_t> rows, const TreeParams& params) {
  if (rows.empty()) throw DataError("fit_tree: no rows");
  if (params.min_leaf < 1) throw ConfigError("min_leaf must be at least 1");
  if (params.max_depth < 0) throw ConfigError("tree depth must be non-negative");
  if (!(params.min_gain >= 0.0)) throw ConfigError("minimum split gain must be non-negative");
  Grower grower(bins, x, g, rows, params);
  return grower.grow();
}

NewtonLeafCounts newton_leaf_values(GrownTree& grown, std::span<const double> g,
                                    std::span<const double> t,
                                    std::span<const std::size_t> rows, double phi,
                                    double max_step) {
  if (!(phi >= 0.0)) throw ConfigError("leaf L2 penalty must be non-negative");
  NewtonLeafCounts counts;
  const auto groups = leaf_groups(grown);
  for (std::size_t node = 0; node < groups.size(); ++node) {
    if (!grown.tree.nodes[node].is_leaf()) continue;
    double sg = 0.0;
    double st = 0.0;
    for (const std::size_t p : groups[node]) {
      sg += g[rows[p]];
      st += t[rows[p]];
    }
    const double denom = st + phi;
    double& value = grown.tree.nodes[node].value;
    if (denom > 0.0 && std::isfinite(denom)) {
      value = sg / denom;
      if (std::abs(value) > max_step) {
        value = std::copysign(max_step, value);
        ++counts.clamped;
      }
    } else {
      value = 0.0;
      if (!(denom > 0.0)) ++counts.zero_hessian;
    }
  }
  return counts;
}

double step_bound(const DistributionSpec& dist, int k) {
  return dist.links[static_cast<std::size_t>(k)] == Link::kLog ? 19.0 : 1e12;
}

double line_search_shift(const LineSearchProblem& problem, std::span<const std::size_t> rows,
                         bool* clamped) {
  const DistributionSpec& dist = *problem.dist;
  const auto k = static_cast<std::size_t>(problem.k);
  const auto slope = [&](double s) {
    double d1 = 0.0;
    double d2 = 0.0;
    for (const std::size_t r : rows) {
      ParamVector b = problem.params[r];
      b.v[k] += s;
      const double off = problem.offsets.empty() ? 0.0 : problem.offsets[r];
      const Derivatives d = linked_derivatives(dist, b, problem.y[r], off);
      d1 += d.d1[k];
      d2 += d.d2[k];
    }
    return std::make_pair(d1, d2);
  };
  const double bound = step_bound(dist, problem.k);
  const ScalarMinimum m = minimize_convex(slope, 0.0, -bound, bound);
  if (clamped != nullptr) *clamped = m.clamped;
  return m.x;
}

std::size_t line_search_leaf_values(GrownTree& grown, const LineSearchProblem& problem,
                                    std::span<const std::size_t> rows) {
  std::size_t flagged = 0;
  const auto groups = leaf_groups(grown);
  for (std::size_t node = 0; node < groups.size(); ++node) {
    if (!grown.tree.nodes[node].is_leaf()) continue;
    std::vector<std::size_t> leaf_rows;
    leaf_rows.reserve(groups[node].size());
    for (const std::size_t p : groups[node]) leaf_rows.push_back(rows[p]);
    if (leaf_rows.empty()) {
      grown.tree.nodes[node].value = 0.0;
      continue;
    }
    bool clamped = false;
    try {
      grown.tree.nodes[node].value = line_search_shift(problem, leaf_rows, &clamped);
    } catch (const NumericalError& e) {
      throw NumericalError("line search in leaf " + std::to_string(node) + ": " + e.what());
    }
    if (clamped) ++flagged;
  }
  return flagged;
}

}  // namespace boostlab
