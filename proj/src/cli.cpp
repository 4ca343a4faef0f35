#include "boostlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "boostlab/error.hpp"
#include "boostlab/parallel.hpp"
#include "boostlab/tune.hpp"

namespace fs = std::filesystem;

namespace boostlab {

namespace {

// ---------------------------------------------------------------- output --

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  auto out = open_output(path);
  out << j.dump(1) << '\n';
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
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

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ------------------------------------------------------------ evaluation --

std::vector<std::string> param_names(Family family) {
  switch (family) {
    case Family::kPoisson:
      return {"mean"};
    case Family::kNB2:
      return {"mean", "phi"};
    case Family::kGamma:
      return {"mean", "shape"};
    case Family::kGaussian:
    case Family::kLogNormal:
      return {"mu", "sigma"};
  }
  return {};
}

}  // namespace

std::vector<double> average_ranks(const std::vector<double>& values, bool higher_is_better) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto key = [&](std::size_t i) {
    // Missing values rank last.
    if (std::isnan(values[i])) return std::numeric_limits<double>::infinity();
    return higher_is_better ? -values[i] : values[i];
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  std::vector<double> ranks(n, 0.0);
  for (std::size_t r = 0; r < n;) {
    std::size_t end = r;
    while (end < n && key(order[end]) == key(order[r])) ++end;
    const double avg = 0.5 * static_cast<double>(r + 1 + end);
    for (std::size_t t = r; t < end; ++t) ranks[order[t]] = avg;
    r = end;
  }
  return ranks;
}

nlohmann::json evaluate_model(const FittedModel& model, const Dataset& raw_test,
                              const EvalOptions& options, EvalArtifacts* artifacts,
                              const std::vector<const FittedModel*>& compare,
                              const std::vector<std::string>& compare_labels) {
  const Predictions pred = model.predict(raw_test);
  const Family family = model.settings.family;
  const DistributionSpec& dist = pred.dist;
  const std::vector<double>& y = raw_test.target;
  const std::size_t n = y.size();
  if (n == 0) throw DataError("test data is empty");
  for (const double v : y) dist.check_support(v);

  nlohmann::json report;
  report["n"] = n;
  report["algorithm"] = to_string(model.settings.algorithm);
  report["family"] = to_string(family);
  report["probabilistic"] = is_probabilistic(model.settings.algorithm);

  const double dev = total_deviance(family, y, pred.location);
  report["mean_deviance"] = dev / static_cast<double>(n);
  const auto baseline = model.baseline_location(raw_test);
  report["pseudo_r2"] = pseudo_r2(family, y, pred.location, baseline);

  std::vector<double> row_nll(n);
  std::vector<double> row_crps(n);
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    row_nll[i] = nll(dist, pred.params[i], y[i], pred.offsets[i]);
    row_crps[i] = crps(dist, pred.params[i], y[i], pred.offsets[i]);
  }
  const auto mean_of = [&](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  };
  report["mean_nll"] = mean_of(row_nll);
  report["mean_crps"] = mean_of(row_crps);

  EvalArtifacts local;
  EvalArtifacts& art = artifacts ? *artifacts : local;
  if (dist.count_family()) {
    art.dpit = dpit_residuals(dist, pred.params, pred.offsets, y, options.seed);
    report["dpit_uniform_crps"] = art.dpit->mean_uniform_crps;
  } else {
    art.coverage = ci_coverage(dist, pred.params, pred.offsets, y, options.levels);
    nlohmann::json cov = nlohmann::json::array();
    for (const auto& c : art.coverage) cov.push_back({{"level", c.level}, {"coverage", c.coverage}});
    report["coverage"] = cov;
  }

  report["rebalance_factor"] = model.rebalance;
  if (std::accumulate(y.begin(), y.end(), 0.0) != 0.0) {
    report["balance_raw"] = balance(pred.mean, y, 1.0);
    report["balance"] = balance(pred.mean, y, model.rebalance);
  } else {
    report["balance_raw"] = nullptr;
    report["balance"] = nullptr;
  }

  std::vector<double> rebalanced(pred.mean);
  for (double& v : rebalanced) v *= model.rebalance;
  art.calibration = calibration_curve(rebalanced, y, options.calibration_bins);
  report["calibration_merged"] = art.calibration.merged;
  if (options.bootstrap > 0) {
    const AutocalResult ac = autocal_test(rebalanced, y, options.bootstrap, options.seed);
    report["autocal"] = {{"statistic", ac.statistic},
                         {"p_value", ac.p_value},
                         {"replicates", ac.replicates},
                         {"neighbours", ac.neighbours},
                         {"alpha", options.alpha},
                         {"reject", ac.p_value < options.alpha}};
  }

  std::vector<std::vector<double>> point{pred.mean};
  art.murphy_labels = {"model"};
  for (std::size_t c = 0; c < compare.size(); ++c) {
    point.push_back(compare[c]->predict(raw_test).mean);
    art.murphy_labels.push_back(c < compare_labels.size() ? compare_labels[c]
                                                          : "compare" + std::to_string(c + 1));
  }
  art.murphy = murphy_curve(y, point, murphy_grid(y, point));
  if (!compare.empty()) {
    nlohmann::json dom = nlohmann::json::object();
    for (std::size_t c = 1; c < point.size(); ++c) {
      dom[art.murphy_labels[c]] = {{"model_dominates", art.murphy.weakly_dominates(0, c)},
                                   {"dominated_by", art.murphy.weakly_dominates(c, 0)}};
    }
    report["murphy_dominance"] = dom;
  }
  const auto& flags = model.flags();
  report["training_flags"] = {{"zero_hessian_leaves", flags.zero_hessian_leaves},
                              {"clamped_leaves", flags.clamped_leaves},
                              {"fisher_fallbacks", flags.fisher_fallbacks},
                              {"stopped_on_worse_cycle", flags.stopped_on_worse_cycle},
                              {"cycles", flags.cycles}};
  return report;
}

namespace {

void write_eval_csvs(const fs::path& dir, const EvalArtifacts& art) {
  {
    auto out = open_output(dir / "murphy.csv");
    out << "nu";
    for (const auto& l : art.murphy_labels) out << ',' << csv_field(l);
    out << '\n';
    for (std::size_t j = 0; j < art.murphy.nu.size(); ++j) {
      out << fmt(art.murphy.nu[j]);
      for (const auto& s : art.murphy.scores) out << ',' << fmt(s[j]);
      out << '\n';
    }
  }
  {
    auto out = open_output(dir / "calibration.csv");
    out << "bin,count,mean_prediction,mean_observed\n";
    for (std::size_t b = 0; b < art.calibration.points.size(); ++b) {
      const auto& p = art.calibration.points[b];
      out << b + 1 << ',' << p.count << ',' << fmt(p.mean_prediction) << ','
          << fmt(p.mean_observed) << '\n';
    }
  }
  if (!art.coverage.empty()) {
    auto out = open_output(dir / "coverage.csv");
    out << "level,coverage\n";
    for (const auto& c : art.coverage) out << fmt(c.level) << ',' << fmt(c.coverage) << '\n';
  }
  if (art.dpit) {
    auto out = open_output(dir / "dpit.csv");
    out << "row,pit,residual\n";
    for (std::size_t i = 0; i < art.dpit->pit.size(); ++i) {
      out << i + 1 << ',' << fmt(art.dpit->pit[i]) << ',' << fmt(art.dpit->residuals[i]) << '\n';
    }
  }
}

void write_predictions(const fs::path& path, const FittedModel& model, const Dataset& raw) {
  const Predictions pred = model.predict(raw);
  const auto names = param_names(model.settings.family);
  auto out = open_output(path);
  out << "row,mean,rebalanced_mean";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out << (raw.ids.empty() ? std::to_string(i + 1) : csv_field(raw.ids[i])) << ','
        << fmt(pred.mean[i]) << ',' << fmt(pred.mean[i] * model.rebalance);
    const Natural nat = to_natural(pred.dist, pred.params[i], pred.offsets[i]);
    for (std::size_t k = 0; k < names.size(); ++k) out << ',' << fmt(nat[k]);
    out << '\n';
  }
}

void write_training_outputs(const fs::path& dir, const FittedModel& model) {
  model.save(dir / "model.json");
  {
    auto out = open_output(dir / "training_loss.csv");
    write_loss_csv(out, model.history());
  }
  if (const auto* egbm = std::get_if<EgbmModel>(&model.model)) {
    auto out = open_output(dir / "lookup.csv");
    egbm->write_lookup_csv(out);
  }
}

// --------------------------------------------------------------- options --

struct DataOptions {
  std::string target = "y";
  std::string exposure;
  std::string id;
  std::string schema;
  std::string delimiter = ",";

  TableOptions table(bool require_target = true) const {
    TableOptions t;
    t.target = target;
    if (!exposure.empty()) t.exposure = exposure;
    if (!id.empty()) t.id = id;
    if (delimiter.size() != 1) throw ConfigError("delimiter must be a single character");
    t.delimiter = delimiter[0];
    t.require_target = require_target;
    return t;
  }

  Dataset load_training(const std::string& path) const {
    const TableOptions t = table();
    const Schema s = schema.empty() ? infer_schema(path, t) : parse_schema(schema);
    return load_table(path, s, t);
  }

  /// Loads rows for an existing model, defaulting the column names to the
  /// model's training names.
  Dataset load_for(const FittedModel& model, const std::string& path, bool require_target,
                   bool target_given, bool exposure_given) const {
    DataOptions o = *this;
    if (!target_given) o.target = model.target_name;
    if (!exposure_given) o.exposure = model.exposure_name;
    return load_table(path, model.encoder.input_schema(), o.table(require_target));
  }
};

struct SettingsOptions {
  std::string algo = "newton";
  std::string dist = "poisson";
  std::string growth = "depthwise";
  std::string encoding = "native";
  std::string aux_link;
  std::vector<int> cyc_iterations;
  std::vector<int> cyc_depth;
  std::vector<double> cyc_learning_rate;
  TrainSettings settings;

  void add(CLI::App& app) {
    auto& b = settings.boost;
    app.add_option("--algo", algo, "gbm, newton, newton-dart, egbm, lss, lss-dart, cyc, ngboost")
        ->capture_default_str();
    app.add_option("--dist", dist, "poisson, nb2, gamma, lognormal, gaussian")->capture_default_str();
    app.add_option("--iterations", b.iterations, "boosting iterations M")->capture_default_str();
    app.add_option("--depth", b.depth, "tree depth d")->capture_default_str();
    app.add_option("--learning-rate", b.learning_rate, "shrinkage lambda")->capture_default_str();
    app.add_option("--subsample", b.subsample, "row subsample delta")->capture_default_str();
    app.add_option("--col-fraction", b.col_fraction, "column subsample zeta")->capture_default_str();
    app.add_option("--min-gain", b.min_gain, "minimum split gain gamma")->capture_default_str();
    app.add_option("--l2", b.l2, "leaf ridge penalty phi")->capture_default_str();
    app.add_option("--min-leaf-fraction", b.min_leaf_fraction, "minimum leaf size as a share of rows")
        ->capture_default_str();
    app.add_option("--min-leaf", b.min_leaf, "absolute minimum leaf size (overrides the share)");
    app.add_option("--growth", growth, "depthwise or leafwise")->capture_default_str();
    app.add_option("--max-leaves", b.max_leaves, "leaf cap, 0 for none")->capture_default_str();
    app.add_option("--max-bins", b.max_bins, "histogram bins per feature")->capture_default_str();
    app.add_option("--drop-rate", b.dart.drop_rate, "DART drop rate")->capture_default_str();
    app.add_option("--skip-prob", b.dart.skip_prob, "DART skip probability")->capture_default_str();
    app.add_option("--interactions", b.interactions, "EGBM interaction pairs")->capture_default_str();
    app.add_option("--interaction-bins", b.interaction_bins, "FAST grid bins per feature")
        ->capture_default_str();
    app.add_option("--q-max", settings.q_max, "LSS extra cycles")->capture_default_str();
    app.add_option("--tol", settings.tol, "LSS relative convergence tolerance")->capture_default_str();
    app.add_option("--aux-link", aux_link, "link of the second parameter: log or identity");
    app.add_option("--cyc-iterations", cyc_iterations, "cyc M_k, one per parameter")->expected(2);
    app.add_option("--cyc-depth", cyc_depth, "cyc d_k, one per parameter")->expected(2);
    app.add_option("--cyc-learning-rate", cyc_learning_rate, "cyc lambda_k, one per parameter")
        ->expected(2);
    app.add_option("--encoding", encoding, "native, onehot, ordinal, target")->capture_default_str();
    app.add_option("--smoothing", settings.smoothing, "target-statistic smoothing")
        ->capture_default_str();
  }

  TrainSettings resolve(std::uint64_t seed, bool subsample_given) const {
    TrainSettings s = settings;
    s.algorithm = parse_algorithm(algo);
    s.family = parse_family(dist);
    s.boost.growth = parse_growth(growth);
    s.encoding = parse_encoding(encoding);
    s.boost.seed = seed;
    if (!aux_link.empty()) s.aux_link = parse_link(aux_link);
    // Natural-gradient boosting and cyc-GBM use every row unless asked.
    if (!subsample_given &&
        (s.algorithm == Algorithm::kNgboost || s.algorithm == Algorithm::kCyc)) {
      s.boost.subsample = 1.0;
    }
    if (s.algorithm == Algorithm::kCyc && s.boost.subsample != 1.0) {
      throw ConfigError("cyc uses every row; --subsample does not apply");
    }
    for (std::size_t k = 0; k < 2; ++k) {
      s.cyc[k].iterations = cyc_iterations.empty() ? s.boost.iterations : cyc_iterations[k];
      s.cyc[k].depth = cyc_depth.empty() ? s.boost.depth : cyc_depth[k];
      s.cyc[k].learning_rate =
          cyc_learning_rate.empty() ? s.boost.learning_rate : cyc_learning_rate[k];
    }
    s.validate();
    return s;
  }
};

struct EvalCliOptions {
  EvalOptions eval;
  void add(CLI::App& app) {
    app.add_option("--calibration-bins", eval.calibration_bins, "calibration curve bins")
        ->capture_default_str();
    app.add_option("--bootstrap", eval.bootstrap, "auto-calibration replicates, 0 to skip")
        ->capture_default_str();
    app.add_option("--alpha", eval.alpha, "auto-calibration test level")->capture_default_str();
  }
};

void add_data_options(CLI::App& app, DataOptions& d) {
  app.add_option("--target", d.target, "response column")->capture_default_str();
  app.add_option("--exposure", d.exposure, "exposure column (default: all ones)");
  app.add_option("--id", d.id, "row identifier column");
  app.add_option("--schema", d.schema, "feature kinds, e.g. age:numeric,region:categorical");
  app.add_option("--delimiter", d.delimiter, "field separator")->capture_default_str();
}

void prepare_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out + ": " + ec.message());
}

// -------------------------------------------------------------- benchmark --

struct BenchRow {
  std::string name;
  std::string dataset;
  std::string algorithm;
  std::string label;  // groups runs for the average ranks; defaults to the algorithm
  std::string status = "ok";
  double seconds = std::nan("");
  double pseudo_r2 = std::nan("");
  double mean_deviance = std::nan("");
  double mean_crps = std::nan("");
  double coverage95 = std::nan("");
  double balance = std::nan("");
  double autocal_p = std::nan("");
};

struct BenchRun {
  std::string name;
  std::vector<std::string> args;  // "--key=value"
};

std::vector<BenchRun> read_runs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  CLI::ConfigINI ini;
  std::vector<BenchRun> runs;
  std::map<std::string, std::size_t> index;
  for (const auto& item : ini.from_config(in)) {
    if (item.parents.empty()) {
      if (item.name == "++" || item.name == "--") continue;
      throw ConfigError("benchmark key '" + item.name + "' must sit inside a [run] section");
    }
    const std::string& section = item.parents.front();
    if (item.name == "++" || item.name == "--") continue;
    auto [it, inserted] = index.try_emplace(section, runs.size());
    if (inserted) runs.push_back({section, {}});
    std::string value;
    for (std::size_t v = 0; v < item.inputs.size(); ++v) value += (v ? "," : "") + item.inputs[v];
    runs[it->second].args.push_back("--" + item.name + "=" + value);
  }
  return runs;
}

BenchRow run_benchmark_entry(const BenchRun& run, const EvalOptions& eval, std::uint64_t seed) {
  BenchRow row;
  row.name = run.name;
  row.dataset = "default";
  CLI::App app{"benchmark run"};
  DataOptions data;
  SettingsOptions so;
  std::string train_path;
  std::string test_path;
  std::uint64_t run_seed = seed;
  add_data_options(app, data);
  so.add(app);
  app.add_option("--dataset", row.dataset);
  app.add_option("--label", row.label);
  app.add_option("--data", train_path)->required();
  app.add_option("--test", test_path)->required();
  app.add_option("--seed", run_seed);
  std::vector<std::string> args(run.args.rbegin(), run.args.rend());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    throw ConfigError("benchmark run [" + run.name + "]: " + e.what());
  }
  row.algorithm = so.algo;
  if (row.label.empty()) row.label = row.algorithm;
  try {
    const TrainSettings settings = so.resolve(run_seed, app.count("--subsample") > 0);
    const Dataset train = data.load_training(train_path);
    const auto start = std::chrono::steady_clock::now();
    const FittedModel model = fit_model(train, settings);
    row.seconds = seconds_since(start);
    const Dataset test = data.load_for(model, test_path, true, true, true);
    const auto report = evaluate_model(model, test, eval);
    row.pseudo_r2 = report.at("pseudo_r2").get<double>();
    row.mean_deviance = report.at("mean_deviance").get<double>();
    row.mean_crps = report.at("mean_crps").get<double>();
    if (report.contains("coverage")) {
      for (const auto& c : report["coverage"]) {
        if (std::abs(c["level"].get<double>() - 0.95) < 1e-12) row.coverage95 = c["coverage"];
      }
    }
    if (report.at("balance").is_number()) row.balance = report["balance"].get<double>();
    if (report.contains("autocal")) row.autocal_p = report["autocal"]["p_value"].get<double>();
  } catch (const std::exception& e) {
    row.status = std::string("failed: ") + e.what();
  }
  return row;
}

void write_benchmark(const fs::path& path, const std::vector<BenchRow>& rows) {
  // Ranks within each dataset, then averaged per label across datasets.
  std::map<std::string, std::vector<std::size_t>> by_dataset;
  for (std::size_t i = 0; i < rows.size(); ++i) by_dataset[rows[i].dataset].push_back(i);
  std::vector<double> rank_time(rows.size());
  std::vector<double> rank_r2(rows.size());
  for (const auto& [ds, idx] : by_dataset) {
    std::vector<double> t;
    std::vector<double> r;
    for (const auto i : idx) {
      t.push_back(rows[i].seconds);
      r.push_back(rows[i].pseudo_r2);
    }
    const auto rt = average_ranks(t, false);
    const auto rr = average_ranks(r, true);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      rank_time[idx[k]] = rt[k];
      rank_r2[idx[k]] = rr[k];
    }
  }
  std::map<std::string, std::pair<double, double>> sums;
  std::map<std::string, int> counts;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sums[rows[i].label].first += rank_time[i];
    sums[rows[i].label].second += rank_r2[i];
    counts[rows[i].label] += 1;
  }
  auto out = open_output(path);
  out << "run,dataset,algorithm,label,status,seconds,pseudo_r2,mean_deviance,mean_crps,coverage_95,"
         "balance,autocal_p,rank_seconds,rank_pseudo_r2,avg_rank_seconds,avg_rank_pseudo_r2\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const double c = counts[r.label];
    out << csv_field(r.name) << ',' << csv_field(r.dataset) << ',' << csv_field(r.algorithm) << ','
        << csv_field(r.label) << ',' << csv_field(r.status) << ',' << fmt(r.seconds) << ',' << fmt(r.pseudo_r2) << ','
        << fmt(r.mean_deviance) << ',' << fmt(r.mean_crps) << ',' << fmt(r.coverage95) << ','
        << fmt(r.balance) << ',' << fmt(r.autocal_p) << ',' << fmt(rank_time[i]) << ','
        << fmt(rank_r2[i]) << ',' << fmt(sums[r.label].first / c) << ','
        << fmt(sums[r.label].second / c) << '\n';
  }
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  if (dynamic_cast<const std::domain_error*>(&e)) return 4;
  if (dynamic_cast<const std::overflow_error*>(&e)) return 4;
  return 1;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Gradient boosting for actuarial frequency and severity models"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI file with option values; command-line flags win");
  int threads = -1;
  std::uint64_t seed = 0;
  app.add_option("--threads", threads, "worker threads, 0 = auto (results do not depend on it)");
  app.add_option("--seed", seed, "random seed")->capture_default_str();

  DataOptions data;
  SettingsOptions so;
  EvalCliOptions eo;
  std::string data_path;
  std::string test_path;
  std::string model_path;
  std::string out_dir = ".";
  std::vector<std::string> compare_paths;

  auto* train = app.add_subcommand("train", "train a model and write model.json");
  add_data_options(*train, data);
  so.add(*train);
  train->add_option("--data", data_path, "training table")->required();
  train->add_option("--out", out_dir, "output directory")->capture_default_str();

  TuneGrid grid;
  std::vector<std::string> grid_extra;
  double val_fraction = 0.20;
  std::string score = "deviance";
  auto* tune = app.add_subcommand("tune", "grid-search M and d, then refit the winner");
  add_data_options(*tune, data);
  so.add(*tune);
  tune->add_option("--data", data_path, "training part (the test part is never read)")->required();
  tune->add_option("--out", out_dir, "output directory")->capture_default_str();
  tune->add_option("--grid-iterations", grid.iterations, "values of M")->capture_default_str();
  tune->add_option("--grid-depths", grid.depths, "values of d")->capture_default_str();
  tune->add_option("--grid", grid_extra, "extra axis name=v1,v2 (repeatable)");
  tune->add_option("--val-fraction", val_fraction, "validation share of the training part")
      ->capture_default_str();
  tune->add_option("--score", score, "validation loss: deviance or nll")->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "score a model on a test table");
  add_data_options(*evaluate, data);
  eo.add(*evaluate);
  evaluate->add_option("--model", model_path, "model.json")->required();
  evaluate->add_option("--test", test_path, "test table")->required();
  evaluate->add_option("--compare", compare_paths, "further models for the Murphy diagram");
  evaluate->add_option("--out", out_dir, "output directory")->capture_default_str();

  auto* predict = app.add_subcommand("predict", "write per-row predictions");
  add_data_options(*predict, data);
  predict->add_option("--model", model_path, "model.json")->required();
  predict->add_option("--data", data_path, "table to score")->required();
  predict->add_option("--out", out_dir, "output directory")->capture_default_str();

  std::string runs_path;
  auto* bench = app.add_subcommand("benchmark", "train and score every [run] of an INI file");
  eo.add(*bench);
  bench->add_option("--runs", runs_path, "INI file, one section per run")->required();
  bench->add_option("--out", out_dir, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    set_thread_count(threads >= 0 ? threads : thread_count_from_env());
    eo.eval.seed = seed;
    const auto given = [](CLI::App* sub, const char* name) { return sub->count(name) > 0; };

    if (train->parsed()) {
      const TrainSettings settings = so.resolve(seed, given(train, "--subsample"));
      const Dataset ds = data.load_training(data_path);
      prepare_out(out_dir);
      const auto start = std::chrono::steady_clock::now();
      const FittedModel model = fit_model(ds, settings);
      const double secs = seconds_since(start);
      write_training_outputs(out_dir, model);
      write_json(fs::path(out_dir) / "run_meta.json",
                 {{"command", "train"}, {"train_seconds", secs}, {"threads", thread_count()}});
      std::cout << "trained " << to_string(settings.algorithm) << " on " << ds.size() << " rows in "
                << fmt(secs) << " s\n";
    } else if (tune->parsed()) {
      const TrainSettings base = so.resolve(seed, given(tune, "--subsample"));
      for (const auto& axis : grid_extra) grid.extras.insert(parse_grid_axis(axis));
      SplitSpec split;
      split.val_fraction_of_train = val_fraction;
      split.seed = seed;
      const Dataset ds = data.load_training(data_path);
      prepare_out(out_dir);
      const auto start = std::chrono::steady_clock::now();
      const TuneResult result = grid_search(ds, base, grid, split, parse_score_loss(score));
      const double secs = seconds_since(start);
      write_training_outputs(out_dir, result.model);
      {
        auto out = open_output(fs::path(out_dir) / "score_table.csv");
        write_score_csv(out, result);
      }
      write_json(fs::path(out_dir) / "best_settings.json", result.best.to_json());
      write_json(fs::path(out_dir) / "run_meta.json",
                 {{"command", "tune"}, {"tune_seconds", secs}, {"threads", thread_count()}});
      const auto& best = result.table[result.best_index];
      std::cout << "best M=" << best.iterations << " d=" << best.depth
                << " validation score " << fmt(best.score) << '\n';
    } else if (evaluate->parsed()) {
      const FittedModel model = FittedModel::load(model_path);
      const Dataset test = data.load_for(model, test_path, true, given(evaluate, "--target"),
                                         given(evaluate, "--exposure"));
      std::vector<FittedModel> others;
      for (const auto& p : compare_paths) others.push_back(FittedModel::load(p));
      std::vector<const FittedModel*> ptrs;
      std::vector<std::string> labels;
      for (std::size_t c = 0; c < others.size(); ++c) {
        ptrs.push_back(&others[c]);
        labels.push_back(fs::path(compare_paths[c]).parent_path().filename().string() + "/" +
                         fs::path(compare_paths[c]).filename().string());
      }
      prepare_out(out_dir);
      const auto start = std::chrono::steady_clock::now();
      EvalArtifacts art;
      const auto report = evaluate_model(model, test, eo.eval, &art, ptrs, labels);
      const double secs = seconds_since(start);
      write_json(fs::path(out_dir) / "report.json", report);
      write_eval_csvs(out_dir, art);
      write_json(fs::path(out_dir) / "run_meta.json",
                 {{"command", "evaluate"}, {"evaluate_seconds", secs}, {"threads", thread_count()}});
      std::cout << "pseudo_r2 " << fmt(report["pseudo_r2"].get<double>()) << '\n';
    } else if (predict->parsed()) {
      const FittedModel model = FittedModel::load(model_path);
      const Dataset ds = data.load_for(model, data_path, false, given(predict, "--target"),
                                       given(predict, "--exposure"));
      prepare_out(out_dir);
      write_predictions(fs::path(out_dir) / "predictions.csv", model, ds);
    } else if (bench->parsed()) {
      const auto runs = read_runs(runs_path);
      if (runs.size() < 2) throw ConfigError("benchmark needs at least 2 runs");
      prepare_out(out_dir);
      std::vector<BenchRow> rows;
      for (const auto& run : runs) {
        rows.push_back(run_benchmark_entry(run, eo.eval, seed));
        std::cout << run.name << ": " << rows.back().status << '\n';
      }
      write_benchmark(fs::path(out_dir) / "benchmark.csv", rows);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}

}  // namespace boostlab
