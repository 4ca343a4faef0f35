#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "boostlab/data.hpp"
#include "boostlab/model.hpp"

namespace boostlab {

/// Hyper-parameter axes. Extras are named lists applied on top of the base
/// settings: min_gain, l2, col_fraction, interactions, q_max, drop_rate,
/// skip_prob, aux_depth and aux_iterations (second cyc parameter).
struct TuneGrid {
  std::vector<int> iterations{250, 500, 1000, 2000};
  std::vector<int> depths{1, 2, 3, 5};
  std::map<std::string, std::vector<double>> extras;

  void validate() const;
};

/// Parses "name=v1,v2,..." into an extra axis.
std::pair<std::string, std::vector<double>> parse_grid_axis(std::string_view text);

enum class ScoreLoss { kDeviance, kNll };

std::string to_string(ScoreLoss loss);
ScoreLoss parse_score_loss(std::string_view text);

struct TunePoint {
  int iterations = 0;
  int depth = 0;
  std::vector<std::pair<std::string, double>> extras;
  double score = 0.0;  // validation mean loss; +inf when training failed
  double seconds = 0.0;
  std::string error;
};

struct TuneResult {
  TrainSettings best;
  FittedModel model;  // winner refitted on the whole training part
  std::vector<TunePoint> table;
  std::size_t best_index = 0;
};

/// Settings for one grid point.
TrainSettings apply_point(const TrainSettings& base, const TunePoint& point);

/// Mean validation loss of a fitted model on raw rows.
double validation_loss(const FittedModel& model, const Dataset& raw, ScoreLoss loss);

/// Grid search on `train` only: holds out val_fraction_of_train of it, scores
/// every grid point, picks the lowest score (ties: fewer iterations, then
/// shallower trees, then grid order) and refits the winner on all of `train`.
TuneResult grid_search(const Dataset& train, const TrainSettings& base, const TuneGrid& grid,
                       const SplitSpec& split, ScoreLoss loss);

/// Columns: iterations, depth, each extra, score, seconds.
void write_score_csv(std::ostream& out, const TuneResult& result);

}  // namespace boostlab
