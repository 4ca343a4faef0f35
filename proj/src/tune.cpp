#include "boostlab/tune.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "boostlab/error.hpp"

namespace boostlab {

namespace {

const std::vector<std::string>& known_extras() {
  static const std::vector<std::string> names{"min_gain",  "l2",        "col_fraction",
                                              "interactions", "q_max",  "drop_rate",
                                              "skip_prob", "aux_depth", "aux_iterations"};
  return names;
}

double parse_number(std::string_view text) {
  try {
    std::size_t used = 0;
    const std::string s(text);
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("not a number in grid: '" + std::string(text) + "'");
  }
}

}  // namespace

void TuneGrid::validate() const {
  if (iterations.empty() || depths.empty()) throw ConfigError("tuning grid axes must be non-empty");
  for (const int m : iterations) {
    if (m < 0) throw ConfigError("grid iterations must be non-negative");
  }
  for (const int d : depths) {
    if (d < 0) throw ConfigError("grid depths must be non-negative");
  }
  const auto& known = known_extras();
  for (const auto& [name, values] : extras) {
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw ConfigError("unknown tuning axis '" + name + "'");
    }
    if (values.empty()) throw ConfigError("tuning axis '" + name + "' is empty");
  }
}

std::pair<std::string, std::vector<double>> parse_grid_axis(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ConfigError("grid axis needs name=v1,v2: '" + std::string(text) + "'");
  std::pair<std::string, std::vector<double>> out{std::string(text.substr(0, eq)), {}};
  std::string_view rest = text.substr(eq + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    out.second.push_back(parse_number(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

std::string to_string(ScoreLoss loss) { return loss == ScoreLoss::kDeviance ? "deviance" : "nll"; }

ScoreLoss parse_score_loss(std::string_view text) {
  if (text == "deviance") return ScoreLoss::kDeviance;
  if (text == "nll") return ScoreLoss::kNll;
  throw ConfigError("unknown score loss '" + std::string(text) + "' (expected deviance or nll)");
}

TrainSettings apply_point(const TrainSettings& base, const TunePoint& point) {
  TrainSettings s = base;
  s.boost.iterations = point.iterations;
  s.boost.depth = point.depth;
  s.cyc[0].iterations = point.iterations;
  s.cyc[0].depth = point.depth;
  s.cyc[1].iterations = point.iterations;
  s.cyc[1].depth = point.depth;
  for (const auto& [name, v] : point.extras) {
    if (name == "min_gain") s.boost.min_gain = v;
    else if (name == "l2") s.boost.l2 = v;
    else if (name == "col_fraction") s.boost.col_fraction = v;
    else if (name == "interactions") s.boost.interactions = static_cast<int>(v);
    else if (name == "q_max") s.q_max = static_cast<int>(v);
    else if (name == "drop_rate") s.boost.dart.drop_rate = v;
    else if (name == "skip_prob") s.boost.dart.skip_prob = v;
    else if (name == "aux_depth") s.cyc[1].depth = static_cast<int>(v);
    else if (name == "aux_iterations") s.cyc[1].iterations = static_cast<int>(v);
  }
  return s;
}

double validation_loss(const FittedModel& model, const Dataset& raw, ScoreLoss loss) {
  const Predictions pred = model.predict(raw);
  const std::size_t n = raw.size();
  if (n == 0) throw DataError("empty validation set");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += loss == ScoreLoss::kDeviance
                 ? metric_deviance(model.settings.family, raw.target[i], pred.location[i])
                 : nll(pred.dist, pred.params[i], raw.target[i], pred.offsets[i]);
  }
  return total / static_cast<double>(n);
}

TuneResult grid_search(const Dataset& train, const TrainSettings& base, const TuneGrid& grid,
                       const SplitSpec& split, ScoreLoss loss) {
  grid.validate();
  split.validate();
  base.validate();
  auto [fit_rows, val_rows] = split_holdout(train.size(), split.val_fraction_of_train, split.seed);
  const Dataset fit_part = train.subset(fit_rows);
  const Dataset val_part = train.subset(val_rows);

  std::vector<int> ms = grid.iterations;
  std::vector<int> ds = grid.depths;
  std::sort(ms.begin(), ms.end());
  ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
  std::sort(ds.begin(), ds.end());
  ds.erase(std::unique(ds.begin(), ds.end()), ds.end());

  // Cartesian product of the extras, in map (name) order.
  std::vector<std::vector<std::pair<std::string, double>>> combos{{}};
  for (const auto& [name, values] : grid.extras) {
    std::vector<std::vector<std::pair<std::string, double>>> next;
    for (const auto& c : combos) {
      for (const double v : values) {
        auto e = c;
        e.emplace_back(name, v);
        next.push_back(std::move(e));
      }
    }
    combos = std::move(next);
  }

  TuneResult result;
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const int m : ms) {
    for (const int d : ds) {
      for (const auto& extras : combos) {
        TunePoint point;
        point.iterations = m;
        point.depth = d;
        point.extras = extras;
        const auto start = std::chrono::steady_clock::now();
        try {
          const FittedModel f = fit_model(fit_part, apply_point(base, point));
          point.score = validation_loss(f, val_part, loss);
          if (!std::isfinite(point.score)) {
            point.score = std::numeric_limits<double>::infinity();
            point.error = "non-finite validation loss";
          }
        } catch (const std::exception& e) {
          point.score = std::numeric_limits<double>::infinity();
          point.error = e.what();
        }
        point.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (point.score < best) {
          best = point.score;
          result.best_index = result.table.size();
          found = true;
        }
        result.table.push_back(std::move(point));
      }
    }
  }
  if (!found) throw NumericalError("every grid point failed to train");
  result.best = apply_point(base, result.table[result.best_index]);
  result.model = fit_model(train, result.best);
  return result;
}

void write_score_csv(std::ostream& out, const TuneResult& result) {
  out << "iterations,depth";
  if (!result.table.empty()) {
    for (const auto& [name, v] : result.table.front().extras) out << ',' << name;
  }
  out << ",score,seconds\n";
  out.precision(17);
  for (const auto& p : result.table) {
    out << p.iterations << ',' << p.depth;
    for (const auto& [name, v] : p.extras) out << ',' << v;
    if (std::isinf(p.score)) {
      out << ",inf";
    } else {
      out << ',' << p.score;
    }
    out << ',' << p.seconds << '\n';
  }
}

}  // namespace boostlab
