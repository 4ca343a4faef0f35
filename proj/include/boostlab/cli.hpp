#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "boostlab/data.hpp"
#include "boostlab/eval.hpp"
#include "boostlab/model.hpp"
#include "json.hpp"

namespace boostlab {

struct EvalOptions {
  std::size_t calibration_bins = 10;
  int bootstrap = 1000;
  double alpha = 0.01;
  std::uint64_t seed = 0;
  std::vector<double> levels{0.50, 0.75, 0.95};
};

/// Curve data behind a report, written as CSV by the CLI.
struct EvalArtifacts {
  MurphyCurve murphy;
  std::vector<std::string> murphy_labels;
  CalibrationCurve calibration;
  std::vector<Coverage> coverage;
  std::optional<DpitResult> dpit;
};

/// Scores a fitted model on raw test rows. `compare` adds models to the Murphy
/// diagram. Coverage is reported for continuous families, DPIT for counts.
nlohmann::json evaluate_model(const FittedModel& model, const Dataset& raw_test,
                              const EvalOptions& options, EvalArtifacts* artifacts = nullptr,
                              const std::vector<const FittedModel*>& compare = {},
                              const std::vector<std::string>& compare_labels = {});

/// Ranks with ties sharing their average rank; rank 1 is the best value.
std::vector<double> average_ranks(const std::vector<double>& values, bool higher_is_better);

/// Command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace boostlab
