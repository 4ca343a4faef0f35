#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace boostlab {

enum class FeatureKind { kNumeric, kCategorical };

std::string to_string(FeatureKind kind);
FeatureKind parse_feature_kind(std::string_view text);

/// One covariate column. Categorical columns keep level codes (exact small
/// integers) in `values`; codes index into `levels`.
struct FeatureColumn {
  std::string name;
  FeatureKind kind = FeatureKind::kNumeric;
  std::vector<double> values;
  std::vector<std::string> levels;

  bool categorical() const { return kind == FeatureKind::kCategorical; }
  std::size_t num_levels() const { return levels.size(); }
};

/// Column-typed training table: target, exposure-to-risk and covariates.
/// Immutable by convention once built; every column has length size().
struct Dataset {
  std::vector<FeatureColumn> features;
  std::vector<double> target;
  std::vector<double> exposure;
  std::vector<std::string> ids;
  std::string target_name = "y";
  std::string exposure_name;

  std::size_t size() const { return target.size(); }
  std::size_t num_features() const { return features.size(); }
  std::optional<std::size_t> feature_index(std::string_view name) const;

  /// Throws DataError on ragged columns, non-positive exposure, non-finite
  /// numeric values, out-of-range level codes or (when requested) negative
  /// targets.
  void validate(bool nonnegative_target) const;

  Dataset subset(std::span<const std::size_t> rows) const;
};

/// Declared feature columns, in no particular order; the header order of the
/// file decides the feature order.
using Schema = std::map<std::string, FeatureKind>;

struct TableOptions {
  std::string target;
  std::optional<std::string> exposure;
  std::optional<std::string> id;
  char delimiter = ',';
  bool require_target = true;  // when false a missing target column reads as zeros
};

/// Parses a delimiter-separated file with a header row. Columns absent from the
/// schema (other than target/exposure/id) are ignored.
Dataset load_table(const std::filesystem::path& path, const Schema& schema,
                   const TableOptions& options);

/// Schema for every non-target/exposure/id column: numeric when each non-empty
/// cell parses as a number, categorical otherwise.
Schema infer_schema(const std::filesystem::path& path, const TableOptions& options);

/// Parses "a:numeric,b:categorical".
Schema parse_schema(std::string_view text);

enum class CategoricalEncoding {
  kNative,             // keep categorical, remap codes to training levels
  kOneHot,             // k-1 indicator columns, first level is the reference
  kOrdinalTargetMean,  // numeric rank of the level's mean target
  kTargetStatistic,    // smoothed level mean of the target
};

std::string to_string(CategoricalEncoding encoding);
CategoricalEncoding parse_encoding(std::string_view text);

/// Categorical encoder fitted on training rows and frozen afterwards. Maps any
/// raw table with the same column names onto the training feature layout.
class Encoder {
 public:
  static Encoder fit(const Dataset& train, CategoricalEncoding encoding, double smoothing);

  /// Unseen levels map to the "other" code/rank (native, ordinal), the global
  /// mean (target statistic) or the reference level (one-hot).
  Dataset transform(const Dataset& raw) const;

  /// Names of raw feature columns the encoder needs, with their kinds.
  Schema input_schema() const;
  std::vector<std::string> output_names() const;
  CategoricalEncoding encoding() const { return encoding_; }

  nlohmann::json to_json() const;
  static Encoder from_json(const nlohmann::json& j);

 private:
  struct Column {
    std::string name;
    FeatureKind kind = FeatureKind::kNumeric;
    std::vector<std::string> levels;
    std::vector<double> level_values;  // ordinal rank or target statistic
    double unseen_value = 0.0;
  };

  CategoricalEncoding encoding_ = CategoricalEncoding::kNative;
  double smoothing_ = 0.0;
  std::vector<Column> columns_;
};

/// Convenience: fit on `ds` and transform it.
Dataset encode_categorical(const Dataset& ds, CategoricalEncoding encoding, double smoothing);

struct SplitSpec {
  double train_fraction = 0.85;
  double val_fraction_of_train = 0.20;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train;  // hyper-parameter training part
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded three-way partition: train_fraction of rows form the training part,
/// of which val_fraction_of_train is held out for validation. Each index list
/// is sorted ascending.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);

struct DataSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

DataSplit split_dataset(const Dataset& ds, const SplitSpec& spec);

/// Two-way seeded partition used by tuning: returns (fit rows, validation rows).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_holdout(
    std::size_t n, double holdout_fraction, std::uint64_t seed);

/// floor(delta * n) distinct row indices, sorted, drawn without replacement.
/// Deterministic in (seed, iteration) alone.
std::vector<std::size_t> draw_subsample(std::size_t n, double delta, std::uint64_t seed,
                                        std::uint64_t iteration);

}  // namespace boostlab
