#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "boostlab/data.hpp"
#include "boostlab/dist.hpp"
#include "json.hpp"

namespace boostlab {

/// Per-feature discretization. Numeric bins are delimited by ascending edges:
/// bin(x) = number of edges strictly below x, so x <= edges[t] iff bin(x) <= t.
/// Categorical bins are the level codes plus one trailing "other" bin.
struct BinMap {
  struct Feature {
    std::string name;
    FeatureKind kind = FeatureKind::kNumeric;
    std::vector<double> edges;
    std::size_t num_levels = 0;
    std::vector<std::string> levels;

    std::size_t num_bins() const {
      return kind == FeatureKind::kNumeric ? edges.size() + 1 : num_levels + 1;
    }
    std::uint32_t bin(double x) const;
  };

  std::vector<Feature> features;

  nlohmann::json to_json() const;
  static BinMap from_json(const nlohmann::json& j);
};

/// Quantile binning of the training features; at most max_bins bins per
/// numeric feature, fewer when values repeat.
BinMap build_bins(const Dataset& ds, std::size_t max_bins = 256);

/// Column-major bin indices.
struct BinnedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> data;

  std::uint32_t at(std::size_t row, std::size_t col) const { return data[col * rows + row]; }
  std::span<const std::uint32_t> column(std::size_t col) const {
    return {data.data() + col * rows, rows};
  }
};

BinnedMatrix bin_dataset(const BinMap& bins, const Dataset& ds);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::uint32_t threshold_bin = 0;
  // Categorical split: 1 when the bin goes left. Bins without training rows at
  // this node (including unseen levels) follow the child with more rows.
  std::vector<std::uint8_t> left_bins;
  int left = -1;
  int right = -1;
  double value = 0.0;
  int depth = 0;
  std::size_t count = 0;

  bool is_leaf() const { return feature < 0; }
  bool routes_left(std::uint32_t bin) const {
    if (left_bins.empty()) return bin <= threshold_bin;
    return left_bins[bin < left_bins.size() ? bin : left_bins.size() - 1] != 0;
  }
};

class Tree {
 public:
  std::vector<TreeNode> nodes;

  Tree() : nodes(1) {}

  std::size_t num_leaves() const;
  int depth() const;

  /// Node index of the leaf containing a row.
  int leaf_for_binned(const BinnedMatrix& x, std::size_t row) const;
  int leaf_for_row(const Dataset& ds, std::size_t row) const;

  double predict_binned(const BinnedMatrix& x, std::size_t row) const {
    return nodes[static_cast<std::size_t>(leaf_for_binned(x, row))].value;
  }
  double predict_row(const Dataset& ds, std::size_t row) const {
    return nodes[static_cast<std::size_t>(leaf_for_row(ds, row))].value;
  }

  nlohmann::json to_json() const;
  static Tree from_json(const nlohmann::json& j);

  bool operator==(const Tree& other) const;
};

enum class Growth { kDepthWise, kLeafWise };

std::string to_string(Growth growth);
Growth parse_growth(std::string_view text);

struct TreeParams {
  int max_depth = 3;
  std::size_t min_leaf = 1;
  double col_fraction = 1.0;
  double min_gain = 0.0;
  Growth growth = Growth::kDepthWise;
  std::size_t max_leaves = 0;  // 0: no limit beyond depth
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;  // keys the column sample
  std::vector<std::size_t> allowed_features;  // empty: all features
};

struct GrownTree {
  Tree tree;
  std::vector<int> leaf_of_row;  // aligned with the `rows` argument of fit_tree
};

/// Least-squares regression tree on g (indexed by global row id) over `rows`.
/// Leaf values are the mean of g in each leaf.
GrownTree fit_tree(const BinMap& bins, const BinnedMatrix& x, std::span<const double> g,
                   std::span<const std::size_t> rows, const TreeParams& params);

/// Features chosen for one tree by column subsampling, ascending.
std::vector<std::size_t> sample_columns(std::size_t num_features,
                                        const std::vector<std::size_t>& allowed, double fraction,
                                        std::uint64_t seed, std::uint64_t iteration);

struct NewtonLeafCounts {
  std::size_t zero_hessian = 0;  // denominator <= 0, value set to 0
  std::size_t clamped = 0;       // |value| cut back to max_step
};

/// Sets leaf values to sum(g) / (sum(t) + phi), limited to +-max_step.
NewtonLeafCounts newton_leaf_values(GrownTree& grown, std::span<const double> g,
                                    std::span<const double> t,
                                    std::span<const std::size_t> rows, double phi,
                                    double max_step = std::numeric_limits<double>::infinity());

struct LineSearchProblem {
  const DistributionSpec* dist = nullptr;
  std::span<const ParamVector> params;  // current linked predictions, by global row
  std::span<const double> y;
  std::span<const double> offsets;  // may be empty
  int k = 0;                        // parameter moved by the search
};

/// Sets each leaf value to the exact minimizer of the summed loss over the
/// leaf's rows when parameter k is shifted by that value. Returns the number
/// of leaves whose minimizer hit the step bound.
std::size_t line_search_leaf_values(GrownTree& grown, const LineSearchProblem& problem,
                                    std::span<const std::size_t> rows);

/// Bound on a single linked-scale step along parameter k.
double step_bound(const DistributionSpec& dist, int k);

/// Exact minimizer of sum_i L(y_i, b_i + s u_k) over s for the given rows.
double line_search_shift(const LineSearchProblem& problem, std::span<const std::size_t> rows,
                         bool* clamped = nullptr);

}  // namespace boostlab
