#include "boostlab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "boostlab/error.hpp"
#include "boostlab/random.hpp"

namespace boostlab {
namespace {

std::vector<std::string> split_line(std::string_view line, char delimiter) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

RawTable read_raw(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path.string() + "'");
  RawTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError("data file '" + path.string() + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  for (auto& name : split_line(line, delimiter)) table.header.emplace_back(trim(name));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line, delimiter);
    if (cells.size() != table.header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(table.header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  return table;
}

std::optional<std::size_t> find_column(const std::vector<std::string>& header,
                                       std::string_view name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

bool is_reserved(const std::string& name, const TableOptions& options) {
  return name == options.target || (options.exposure && name == *options.exposure) ||
         (options.id && name == *options.id);
}

}  // namespace

std::string to_string(FeatureKind kind) {
  return kind == FeatureKind::kNumeric ? "numeric" : "categorical";
}

FeatureKind parse_feature_kind(std::string_view text) {
  if (text == "numeric" || text == "num") return FeatureKind::kNumeric;
  if (text == "categorical" || text == "cat") return FeatureKind::kCategorical;
  throw ConfigError("unknown feature kind '" + std::string(text) + "'");
}

std::optional<std::size_t> Dataset::feature_index(std::string_view name) const {
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (features[j].name == name) return j;
  }
  return std::nullopt;
}

void Dataset::validate(bool nonnegative_target) const {
  const std::size_t n = size();
  if (exposure.size() != n) throw DataError("exposure column length differs from target");
  if (!ids.empty() && ids.size() != n) throw DataError("id column length differs from target");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(target[i])) {
      throw DataError("row " + std::to_string(i + 1) + ": non-finite target");
    }
    if (nonnegative_target && target[i] < 0.0) {
      throw DataError("row " + std::to_string(i + 1) + ": negative target");
    }
    if (!(exposure[i] > 0.0) || !std::isfinite(exposure[i])) {
      throw DataError("row " + std::to_string(i + 1) + ": exposure must be strictly positive");
    }
  }
  for (const auto& column : features) {
    if (column.values.size() != n) {
      throw DataError("feature '" + column.name + "' has " +
                      std::to_string(column.values.size()) + " rows, expected " +
                      std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double v = column.values[i];
      if (!std::isfinite(v)) {
        throw DataError("row " + std::to_string(i + 1) + ": non-finite value in '" +
                        column.name + "'");
      }
      // Codes equal to num_levels() are the "other" bucket for unseen levels.
      if (column.categorical() &&
          (v < 0.0 || v > static_cast<double>(column.num_levels()) || v != std::floor(v))) {
        throw DataError("row " + std::to_string(i + 1) + ": invalid level code in '" +
                        column.name + "'");
      }
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.target_name = target_name;
  out.exposure_name = exposure_name;
  out.target.reserve(rows.size());
  out.exposure.reserve(rows.size());
  for (const std::size_t r : rows) {
    out.target.push_back(target[r]);
    out.exposure.push_back(exposure[r]);
    if (!ids.empty()) out.ids.push_back(ids[r]);
  }
  out.features.reserve(features.size());
  for (const auto& column : features) {
    FeatureColumn c;
    c.name = column.name;
    c.kind = column.kind;
    c.levels = column.levels;
    c.values.reserve(rows.size());
    for (const std::size_t r : rows) c.values.push_back(column.values[r]);
    out.features.push_back(std::move(c));
  }
  return out;
}

Dataset load_table(const std::filesystem::path& path, const Schema& schema,
                   const TableOptions& options) {
  const RawTable raw = read_raw(path, options.delimiter);

  const auto target_col = find_column(raw.header, options.target);
  std::vector<std::string> missing;
  if (!target_col && options.require_target) missing.push_back(options.target);
  std::optional<std::size_t> exposure_col;
  if (options.exposure) {
    exposure_col = find_column(raw.header, *options.exposure);
    if (!exposure_col) missing.push_back(*options.exposure);
  }
  std::optional<std::size_t> id_col;
  if (options.id) {
    id_col = find_column(raw.header, *options.id);
    if (!id_col) missing.push_back(*options.id);
  }
  for (const auto& [name, kind] : schema) {
    if (!find_column(raw.header, name)) missing.push_back(name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw DataError("schema error: missing column(s): " + list);
  }

  Dataset ds;
  ds.target_name = options.target;
  ds.exposure_name = options.exposure.value_or("");
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    const auto it = schema.find(raw.header[c]);
    if (it == schema.end() || is_reserved(raw.header[c], options)) continue;
    FeatureColumn column;
    column.name = raw.header[c];
    column.kind = it->second;
    column.values.reserve(raw.rows.size());
    ds.features.push_back(std::move(column));
    feature_cols.push_back(c);
  }

  std::vector<std::unordered_map<std::string, std::size_t>> level_maps(feature_cols.size());
  for (std::size_t r = 0; r < raw.rows.size(); ++r) {
    const auto& row = raw.rows[r];
    const std::string where = "row " + std::to_string(r + 1);
    const auto y = target_col ? parse_number(row[*target_col]) : std::optional<double>(0.0);
    if (!y) {
      throw DataError(where + ": target '" + options.target + "' is not numeric: '" +
                      row[*target_col] + "'");
    }
    ds.target.push_back(*y);
    if (exposure_col) {
      const auto e = parse_number(row[*exposure_col]);
      if (!e) throw DataError(where + ": exposure is not numeric");
      if (!(*e > 0.0)) throw DataError(where + ": exposure must be strictly positive");
      ds.exposure.push_back(*e);
    } else {
      ds.exposure.push_back(1.0);
    }
    if (id_col) ds.ids.push_back(row[*id_col]);
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      auto& column = ds.features[j];
      const std::string& cell = row[feature_cols[j]];
      if (column.categorical()) {
        const std::string level(trim(cell));
        auto [it, inserted] = level_maps[j].try_emplace(level, column.levels.size());
        if (inserted) column.levels.push_back(level);
        column.values.push_back(static_cast<double>(it->second));
      } else {
        const auto v = parse_number(cell);
        if (!v) {
          throw DataError(where + ": column '" + column.name + "' is not numeric: '" + cell +
                          "'");
        }
        column.values.push_back(*v);
      }
    }
  }
  ds.validate(false);
  return ds;
}

Schema infer_schema(const std::filesystem::path& path, const TableOptions& options) {
  const RawTable raw = read_raw(path, options.delimiter);
  Schema schema;
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    if (is_reserved(raw.header[c], options)) continue;
    bool numeric = true;
    for (const auto& row : raw.rows) {
      if (trim(row[c]).empty() || !parse_number(row[c])) {
        numeric = false;
        break;
      }
    }
    schema[raw.header[c]] = numeric ? FeatureKind::kNumeric : FeatureKind::kCategorical;
  }
  return schema;
}

Schema parse_schema(std::string_view text) {
  Schema schema;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find(',', pos), text.size());
    const std::string_view item = trim(text.substr(pos, end - pos));
    if (!item.empty()) {
      const std::size_t colon = item.rfind(':');
      if (colon == std::string_view::npos) {
        schema[std::string(item)] = FeatureKind::kNumeric;
      } else {
        schema[std::string(trim(item.substr(0, colon)))] =
            parse_feature_kind(trim(item.substr(colon + 1)));
      }
    }
    pos = end + 1;
  }
  return schema;
}

std::string to_string(CategoricalEncoding encoding) {
  switch (encoding) {
    case CategoricalEncoding::kNative: return "native";
    case CategoricalEncoding::kOneHot: return "onehot";
    case CategoricalEncoding::kOrdinalTargetMean: return "ordinal";
    case CategoricalEncoding::kTargetStatistic: return "target";
  }
  return "native";
}

CategoricalEncoding parse_encoding(std::string_view text) {
  if (text == "native") return CategoricalEncoding::kNative;
  if (text == "onehot" || text == "one-hot") return CategoricalEncoding::kOneHot;
  if (text == "ordinal" || text == "ordinal-by-target-mean") {
    return CategoricalEncoding::kOrdinalTargetMean;
  }
  if (text == "target" || text == "target-statistic") return CategoricalEncoding::kTargetStatistic;
  throw ConfigError("unknown categorical encoding '" + std::string(text) + "'");
}

Encoder Encoder::fit(const Dataset& train, CategoricalEncoding encoding, double smoothing) {
  if (smoothing < 0.0) throw ConfigError("smoothing must be non-negative");
  if (train.size() == 0) throw DataError("cannot fit an encoder on an empty table");
  Encoder enc;
  enc.encoding_ = encoding;
  enc.smoothing_ = smoothing;
  const double global_mean =
      std::accumulate(train.target.begin(), train.target.end(), 0.0) /
      static_cast<double>(train.size());

  for (const auto& raw : train.features) {
    Column col;
    col.name = raw.name;
    col.kind = raw.kind;
    if (!raw.categorical()) {
      enc.columns_.push_back(std::move(col));
      continue;
    }
    // Levels in order of first appearance among the training rows.
    std::vector<std::ptrdiff_t> code_to_level(raw.num_levels() + 1, -1);
    std::vector<double> sums;
    std::vector<double> counts;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto code = static_cast<std::size_t>(raw.values[i]);
      if (code >= raw.num_levels()) continue;  // already "other"
      if (code_to_level[code] < 0) {
        code_to_level[code] = static_cast<std::ptrdiff_t>(col.levels.size());
        col.levels.push_back(raw.levels[code]);
        sums.push_back(0.0);
        counts.push_back(0.0);
      }
      sums[code_to_level[code]] += train.target[i];
      counts[code_to_level[code]] += 1.0;
    }
    const std::size_t k = col.levels.size();
    switch (encoding) {
      case CategoricalEncoding::kNative:
      case CategoricalEncoding::kOneHot:
        break;
      case CategoricalEncoding::kOrdinalTargetMean: {
        std::vector<std::size_t> order(k);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return sums[a] / counts[a] < sums[b] / counts[b];
        });
        col.level_values.assign(k, 0.0);
        for (std::size_t r = 0; r < k; ++r) col.level_values[order[r]] = static_cast<double>(r);
        col.unseen_value = static_cast<double>(k);
        break;
      }
      case CategoricalEncoding::kTargetStatistic:
        col.level_values.resize(k);
        for (std::size_t l = 0; l < k; ++l) {
          col.level_values[l] = (sums[l] + smoothing * global_mean) / (counts[l] + smoothing);
        }
        col.unseen_value = global_mean;
        break;
    }
    enc.columns_.push_back(std::move(col));
  }
  return enc;
}

Dataset Encoder::transform(const Dataset& raw) const {
  Dataset out;
  out.target = raw.target;
  out.exposure = raw.exposure;
  out.ids = raw.ids;
  out.target_name = raw.target_name;
  out.exposure_name = raw.exposure_name;

  std::vector<std::string> problems;
  for (const auto& col : columns_) {
    const auto j = raw.feature_index(col.name);
    if (!j) {
      problems.push_back(col.name + " (missing)");
    } else if (raw.features[*j].kind != col.kind) {
      problems.push_back(col.name + " (expected " + to_string(col.kind) + ")");
    }
  }
  if (!problems.empty()) {
    std::string list;
    for (const auto& p : problems) list += (list.empty() ? "" : ", ") + p;
    throw DataError("schema mismatch: " + list);
  }

  const std::size_t n = raw.size();
  for (const auto& col : columns_) {
    const FeatureColumn& src = raw.features[*raw.feature_index(col.name)];
    if (col.kind == FeatureKind::kNumeric) {
      out.features.push_back(src);
      continue;
    }
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t l = 0; l < col.levels.size(); ++l) index.emplace(col.levels[l], l);
    const std::size_t k = col.levels.size();
    std::vector<std::size_t> remap(src.num_levels() + 1, k);
    for (std::size_t c = 0; c < src.num_levels(); ++c) {
      const auto it = index.find(src.levels[c]);
      if (it != index.end()) remap[c] = it->second;
    }
    auto level_of = [&](std::size_t i) {
      return remap[std::min(static_cast<std::size_t>(src.values[i]), src.num_levels())];
    };

    switch (encoding_) {
      case CategoricalEncoding::kNative: {
        FeatureColumn c{col.name, FeatureKind::kCategorical, {}, col.levels};
        c.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) c.values[i] = static_cast<double>(level_of(i));
        out.features.push_back(std::move(c));
        break;
      }
      case CategoricalEncoding::kOneHot:
        for (std::size_t l = 1; l < k; ++l) {
          FeatureColumn c{col.name + "=" + col.levels[l], FeatureKind::kNumeric, {}, {}};
          c.values.resize(n);
          for (std::size_t i = 0; i < n; ++i) c.values[i] = level_of(i) == l ? 1.0 : 0.0;
          out.features.push_back(std::move(c));
        }
        break;
      case CategoricalEncoding::kOrdinalTargetMean:
      case CategoricalEncoding::kTargetStatistic: {
        FeatureColumn c{col.name, FeatureKind::kNumeric, {}, {}};
        c.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t l = level_of(i);
          c.values[i] = l < k ? col.level_values[l] : col.unseen_value;
        }
        out.features.push_back(std::move(c));
        break;
      }
    }
  }
  return out;
}

Schema Encoder::input_schema() const {
  Schema schema;
  for (const auto& col : columns_) schema[col.name] = col.kind;
  return schema;
}

std::vector<std::string> Encoder::output_names() const {
  std::vector<std::string> names;
  for (const auto& col : columns_) {
    if (col.kind == FeatureKind::kCategorical && encoding_ == CategoricalEncoding::kOneHot) {
      for (std::size_t l = 1; l < col.levels.size(); ++l) {
        names.push_back(col.name + "=" + col.levels[l]);
      }
    } else {
      names.push_back(col.name);
    }
  }
  return names;
}

nlohmann::json Encoder::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& col : columns_) {
    nlohmann::json c{{"name", col.name}, {"kind", to_string(col.kind)}};
    if (col.kind == FeatureKind::kCategorical) {
      c["levels"] = col.levels;
      c["level_values"] = col.level_values;
      c["unseen_value"] = col.unseen_value;
    }
    cols.push_back(std::move(c));
  }
  return {{"encoding", to_string(encoding_)}, {"smoothing", smoothing_}, {"columns", cols}};
}

Encoder Encoder::from_json(const nlohmann::json& j) {
  Encoder enc;
  enc.encoding_ = parse_encoding(j.at("encoding").get<std::string>());
  enc.smoothing_ = j.at("smoothing").get<double>();
  for (const auto& c : j.at("columns")) {
    Column col;
    col.name = c.at("name").get<std::string>();
    col.kind = parse_feature_kind(c.at("kind").get<std::string>());
    if (col.kind == FeatureKind::kCategorical) {
      col.levels = c.at("levels").get<std::vector<std::string>>();
      col.level_values = c.at("level_values").get<std::vector<double>>();
      col.unseen_value = c.at("unseen_value").get<double>();
    }
    enc.columns_.push_back(std::move(col));
  }
  return enc;
}

Dataset encode_categorical(const Dataset& ds, CategoricalEncoding encoding, double smoothing) {
  return Encoder::fit(ds, encoding, smoothing).transform(ds);
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (!(val_fraction_of_train > 0.0 && val_fraction_of_train < 1.0)) {
    throw ConfigError("val_fraction_of_train must lie in (0, 1)");
  }
}

namespace {

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed, std::uint64_t key) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  KeyedRng rng(seed, Stream::kSplit, key);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.below(i)]);
  }
  return perm;
}

}  // namespace

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  if (n < 10) throw ConfigError("need at least 10 rows to split, got " + std::to_string(n));
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * n));
  const auto n_val =
      static_cast<std::size_t>(std::llround(spec.val_fraction_of_train * n_train));
  if (n_train == 0 || n_train >= n) throw ConfigError("split leaves an empty train or test part");
  if (n_val == 0 || n_val >= n_train) {
    throw ConfigError("split leaves an empty validation or fitting part");
  }
  const auto perm = seeded_permutation(n, spec.seed, 0);
  SplitIndices out;
  const std::size_t n_fit = n_train - n_val;
  out.train.assign(perm.begin(), perm.begin() + n_fit);
  out.val.assign(perm.begin() + n_fit, perm.begin() + n_train);
  out.test.assign(perm.begin() + n_train, perm.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

DataSplit split_dataset(const Dataset& ds, const SplitSpec& spec) {
  const SplitIndices idx = split_indices(ds.size(), spec);
  return {ds.subset(idx.train), ds.subset(idx.val), ds.subset(idx.test)};
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_holdout(
    std::size_t n, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout fraction must lie in (0, 1)");
  }
  const auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * n));
  if (n_hold == 0 || n_hold >= n) throw ConfigError("holdout split leaves an empty part");
  const auto perm = seeded_permutation(n, seed, 1);
  std::vector<std::size_t> fit(perm.begin(), perm.end() - n_hold);
  std::vector<std::size_t> hold(perm.end() - n_hold, perm.end());
  std::sort(fit.begin(), fit.end());
  std::sort(hold.begin(), hold.end());
  return {std::move(fit), std::move(hold)};
}

std::vector<std::size_t> draw_subsample(std::size_t n, double delta, std::uint64_t seed,
                                        std::uint64_t iteration) {
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("subsample fraction must lie in (0, 1]");
  // The epsilon keeps products such as 0.29 * 100 from flooring to 28.
  const auto k = static_cast<std::size_t>(std::floor(delta * static_cast<double>(n) + 1e-9));
  if (k < 1) throw ConfigError("subsample fraction selects no rows");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (k == n) return idx;
  KeyedRng rng(seed, Stream::kSubsample, iteration);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + rng.below(n - i)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace boostlab
