#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "boostlab/cli.hpp"
#include "boostlab/model.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace boostlab;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "boostlab");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::vector<std::string> lines(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

// Rows as column-name -> value maps.
std::vector<std::map<std::string, std::string>> read_table(const fs::path& path) {
  const auto ls = lines(path);
  const auto head = split(ls.at(0));
  std::vector<std::map<std::string, std::string>> rows;
  for (std::size_t r = 1; r < ls.size(); ++r) {
    const auto cells = split(ls[r]);
    std::map<std::string, std::string> row;
    for (std::size_t c = 0; c < head.size() && c < cells.size(); ++c) row[head[c]] = cells[c];
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json read_json(const fs::path& path) {
  return nlohmann::json::parse(testing::read_file(path));
}

Dataset positive_data(std::size_t n, std::uint64_t seed, bool lognormal) {
  std::mt19937_64 rng(seed);
  auto cols = testing::uniform_features(n, 3, rng);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = 0.5 + cols[0].values[i];
    y[i] = lognormal ? std::exp(mu + (0.3 + 0.5 * cols[1].values[i]) *
                                         std::normal_distribution<double>()(rng))
                     : std::gamma_distribution<double>(2.0, std::exp(mu) / 2.0)(rng);
  }
  return testing::make_dataset(std::move(cols), std::move(y));
}

fs::path write_data(const fs::path& dir, const std::string& name, const Dataset& ds) {
  const auto path = dir / name;
  testing::write_csv(path, ds);
  return path;
}

}  // namespace

TEST_CASE("exit codes") {
  const auto dir = testing::scratch_dir("cli_exit");
  const auto data = write_data(dir, "p.csv", testing::poisson_data(200, 1));
  CHECK(cli({"--help"}) == 0);
  CHECK(cli({"train", "--data", (dir / "missing.csv").string(), "--out", dir.string()}) == 3);
  CHECK(cli({"train", "--data", data.string(), "--no-such-flag"}) == 2);
  CHECK(cli({"train", "--data", data.string(), "--algo", "lss", "--dist", "poisson", "--out",
             dir.string()}) == 2);
  CHECK(cli({"train", "--data", data.string(), "--dist", "weibull", "--out", dir.string()}) == 2);
  CHECK(cli({"train", "--data", data.string(), "--algo", "cyc", "--dist", "gamma", "--subsample",
             "0.5", "--out", dir.string()}) == 2);
  CHECK(cli({"train", "--data", data.string(), "--dist", "gamma", "--out", dir.string()}) == 3);

  // Test table without one of the model's feature columns.
  REQUIRE(cli({"train", "--data", data.string(), "--exposure", "e", "--iterations", "5", "--out",
               (dir / "m").string()}) == 0);
  testing::write_file(dir / "bad.csv", "x0,x1,e,y\n0.1,0.2,1,0\n0.3,0.4,1,1\n");
  CHECK(cli({"evaluate", "--model", (dir / "m" / "model.json").string(), "--test",
             (dir / "bad.csv").string(), "--out", (dir / "ev").string()}) == 3);
}

TEST_CASE("gbm gamma on 100 rows writes a 100-line loss log") {
  const auto dir = testing::scratch_dir("cli_gamma");
  const auto data = write_data(dir, "g.csv", positive_data(100, 2, false));
  REQUIRE(cli({"train", "--data", data.string(), "--algo", "gbm", "--dist", "gamma",
               "--iterations", "100", "--depth", "2", "--out", dir.string()}) == 0);
  const auto log = lines(dir / "training_loss.csv");
  CHECK(log.size() == 101);
  CHECK(log.front() == "iteration,mean_nll,mean_deviance");
  CHECK(fs::exists(dir / "model.json"));
  CHECK(read_json(dir / "model.json")["format_version"] == kModelFormatVersion);
}

TEST_CASE("egbm writes the requested interaction lookups") {
  const auto dir = testing::scratch_dir("cli_egbm");
  const auto data = write_data(dir, "p.csv", testing::poisson_data(600, 3));
  REQUIRE(cli({"train", "--data", data.string(), "--exposure", "e", "--algo", "egbm",
               "--interactions", "3", "--iterations", "20", "--learning-rate", "0.1", "--out",
               dir.string()}) == 0);
  const auto model = read_json(dir / "model.json");
  CHECK(model["kind"] == "egbm");
  CHECK(model["model"]["interactions"].size() == 3);
  std::size_t pair_rows = 0;
  for (const auto& row : read_table(dir / "lookup.csv")) pair_rows += row.at("term") == "interaction";
  CHECK(pair_rows > 0);
}

TEST_CASE("ngboost keeps one step size per iteration") {
  const auto dir = testing::scratch_dir("cli_ngb");
  const auto data = write_data(dir, "h.csv", testing::hetero_gaussian(400, 4));
  REQUIRE(cli({"train", "--data", data.string(), "--algo", "ngboost", "--dist", "gaussian",
               "--iterations", "15", "--learning-rate", "0.1", "--out", dir.string()}) == 0);
  CHECK(read_json(dir / "model.json")["model"]["rho"].size() == 15);
}

TEST_CASE("report keys follow the family") {
  const auto dir = testing::scratch_dir("cli_gate");
  const auto pdata = write_data(dir, "p.csv", testing::poisson_data(800, 5));
  REQUIRE(cli({"train", "--data", pdata.string(), "--exposure", "e", "--iterations", "30",
               "--learning-rate", "0.1", "--out", (dir / "pm").string()}) == 0);
  REQUIRE(cli({"evaluate", "--model", (dir / "pm" / "model.json").string(), "--test",
               pdata.string(), "--bootstrap", "50", "--out", (dir / "pe").string()}) == 0);
  const auto pr = read_json(dir / "pe" / "report.json");
  CHECK(pr.contains("pseudo_r2"));
  CHECK(pr.contains("balance"));
  CHECK(pr["autocal"].contains("p_value"));
  CHECK_FALSE(pr.contains("coverage"));
  CHECK(pr.contains("dpit_uniform_crps"));
  CHECK(fs::exists(dir / "pe" / "dpit.csv"));
  CHECK_FALSE(fs::exists(dir / "pe" / "coverage.csv"));

  const auto ldata = write_data(dir, "l.csv", positive_data(800, 6, true));
  REQUIRE(cli({"train", "--data", ldata.string(), "--algo", "lss", "--dist", "lognormal",
               "--iterations", "30", "--learning-rate", "0.1", "--out", (dir / "lm").string()}) == 0);
  REQUIRE(cli({"evaluate", "--model", (dir / "lm" / "model.json").string(), "--test",
               ldata.string(), "--bootstrap", "0", "--out", (dir / "le").string()}) == 0);
  const auto lr = read_json(dir / "le" / "report.json");
  CHECK(lr.contains("mean_crps"));
  REQUIRE(lr["coverage"].size() == 3);
  CHECK(lr["coverage"][0]["level"] == 0.5);
  CHECK(lr["coverage"][1]["level"] == 0.75);
  CHECK(lr["coverage"][2]["level"] == 0.95);
  CHECK_FALSE(lr.contains("dpit_uniform_crps"));
  CHECK(fs::exists(dir / "le" / "coverage.csv"));
  CHECK(fs::exists(dir / "le" / "murphy.csv"));
  CHECK(fs::exists(dir / "le" / "calibration.csv"));
}

TEST_CASE("evaluating on the training file reproduces the final training deviance") {
  const auto dir = testing::scratch_dir("cli_self");
  for (const std::string algo : {"newton", "gbm", "egbm"}) {
    const auto data = write_data(dir, "p.csv", testing::poisson_data(700, 7));
    REQUIRE(cli({"train", "--data", data.string(), "--exposure", "e", "--algo", algo,
                 "--iterations", "25", "--learning-rate", "0.1", "--out", (dir / algo).string()}) == 0);
    REQUIRE(cli({"evaluate", "--model", (dir / algo / "model.json").string(), "--test",
                 data.string(), "--bootstrap", "0", "--out", (dir / (algo + "_ev")).string()}) == 0);
    const auto log = read_table(dir / algo / "training_loss.csv");
    const double logged = std::stod(log.back().at("mean_deviance"));
    const double eval = read_json(dir / (algo + "_ev") / "report.json")["mean_deviance"];
    CHECK(std::abs(logged - eval) < 1e-10);
  }
}

TEST_CASE("saved models predict bit-identically") {
  const auto dir = testing::scratch_dir("cli_round");
  const Dataset raw = testing::poisson_data(10000, 8);
  for (const Algorithm algo : {Algorithm::kNewton, Algorithm::kEgbm, Algorithm::kNgboost}) {
    TrainSettings s;
    s.algorithm = algo;
    s.family = algo == Algorithm::kNgboost ? Family::kNB2 : Family::kPoisson;
    s.boost.iterations = 20;
    s.boost.learning_rate = 0.1;
    s.boost.interactions = 2;
    const FittedModel m = fit_model(raw, s);
    m.save(dir / "m.json");
    const FittedModel back = FittedModel::load(dir / "m.json");
    const Predictions a = m.predict(raw);
    const Predictions b = back.predict(raw);
    REQUIRE(a.mean.size() == raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      REQUIRE(a.mean[i] == b.mean[i]);
      REQUIRE(a.params[i].v == b.params[i].v);
    }
    CHECK(back.to_json().dump() == m.to_json().dump());
  }
}

TEST_CASE("artifacts do not depend on the thread count") {
  const auto dir = testing::scratch_dir("cli_threads");
  const auto data = write_data(dir, "p.csv", testing::poisson_data(3000, 9));
  const auto gdata = write_data(dir, "g.csv", positive_data(1500, 10, false));
  struct Job {
    std::string name;
    std::vector<std::string> args;
    fs::path data;
  };
  const std::vector<Job> jobs{
      {"newton", {"--algo", "newton-dart", "--exposure", "e", "--col-fraction", "0.7"}, data},
      {"egbm", {"--algo", "egbm", "--exposure", "e", "--interactions", "2"}, data},
      {"lss", {"--algo", "lss", "--dist", "gamma"}, gdata},
      {"cyc", {"--algo", "cyc", "--dist", "gamma"}, gdata},
      {"ngb", {"--algo", "ngboost", "--dist", "gamma"}, gdata},
  };
  for (const auto& job : jobs) {
    std::vector<std::string> reports;
    std::vector<std::string> models;
    for (const std::string t : {"1", "8", "1"}) {
      const auto out = dir / (job.name + "_" + t);
      std::vector<std::string> args{"--threads", t, "--seed", "11", "train", "--data",
                                    job.data.string(), "--iterations", "20", "--learning-rate",
                                    "0.1", "--out", out.string()};
      args.insert(args.end(), job.args.begin(), job.args.end());
      REQUIRE(cli(args) == 0);
      REQUIRE(cli({"--threads", t, "--seed", "11", "evaluate", "--model",
                   (out / "model.json").string(), "--test", job.data.string(), "--bootstrap",
                   "40", "--out", (out / "ev").string()}) == 0);
      models.push_back(testing::read_file(out / "model.json"));
      reports.push_back(testing::read_file(out / "ev" / "report.json"));
    }
    INFO(job.name);
    CHECK(models[0] == models[1]);
    CHECK(models[0] == models[2]);
    CHECK(reports[0] == reports[1]);
    CHECK(reports[0] == reports[2]);
  }
}

TEST_CASE("predict writes one row per input row") {
  const auto dir = testing::scratch_dir("cli_predict");
  const auto data = write_data(dir, "p.csv", testing::poisson_data(300, 12));
  REQUIRE(cli({"train", "--data", data.string(), "--exposure", "e", "--iterations", "10",
               "--out", dir.string()}) == 0);
  // No response column at prediction time.
  std::ifstream in(data);
  std::ostringstream noy;
  for (std::string line; std::getline(in, line);) noy << line.substr(0, line.rfind(',')) << '\n';
  testing::write_file(dir / "x.csv", noy.str());
  REQUIRE(cli({"predict", "--model", (dir / "model.json").string(), "--data",
               (dir / "x.csv").string(), "--out", (dir / "pred").string()}) == 0);
  const auto rows = read_table(dir / "pred" / "predictions.csv");
  REQUIRE(rows.size() == 300);
  const FittedModel m = FittedModel::load(dir / "model.json");
  const Predictions p = m.predict(testing::poisson_data(300, 12));
  CHECK(std::stod(rows[17].at("mean")) == doctest::Approx(p.mean[17]).epsilon(1e-15));
}

TEST_CASE("average ranks share ties") {
  CHECK(average_ranks({0.3, 0.1, 0.2}, true) == std::vector<double>{1, 3, 2});
  CHECK(average_ranks({0.3, 0.1, 0.2}, false) == std::vector<double>{3, 1, 2});
  CHECK(average_ranks({5, 7, 5, 1}, true) == std::vector<double>{2.5, 1, 2.5, 4});
  const double nan = std::nan("");
  CHECK(average_ranks({nan, 2.0, 1.0}, true) == std::vector<double>{3, 1, 2});
}

TEST_CASE("benchmark ranks and determinism") {
  const auto dir = testing::scratch_dir("cli_bench");
  std::ostringstream ini;
  for (int d = 0; d < 3; ++d) {
    const auto tr = write_data(dir, "tr" + std::to_string(d) + ".csv",
                               testing::poisson_data(600, 20 + static_cast<std::uint64_t>(d)));
    const auto te = write_data(dir, "te" + std::to_string(d) + ".csv",
                               testing::poisson_data(600, 40 + static_cast<std::uint64_t>(d)));
    const std::string common = "dataset = d" + std::to_string(d) + "\ndata = " + tr.string() +
                               "\ntest = " + te.string() + "\nexposure = e\n";
    ini << "[flat" << d << "]\n" << common << "label = flat\nalgo = gbm\niterations = 2\n"
        << "learning-rate = 0.01\n\n";
    ini << "[deep" << d << "]\n" << common << "label = deep\nalgo = newton\niterations = 40\n"
        << "learning-rate = 0.1\ndepth = 3\n\n";
    ini << "[again" << d << "]\n" << common << "label = again\nalgo = newton\niterations = 40\n"
        << "learning-rate = 0.1\ndepth = 3\n\n";
  }
  testing::write_file(dir / "runs.ini", ini.str());
  REQUIRE(cli({"benchmark", "--runs", (dir / "runs.ini").string(), "--bootstrap", "20", "--out",
               dir.string()}) == 0);
  const auto rows = read_table(dir / "benchmark.csv");
  REQUIRE(rows.size() == 9);
  std::map<std::string, std::vector<double>> by_label;
  for (std::size_t d = 0; d < 3; ++d) {
    const auto& flat = rows[3 * d];
    const auto& deep = rows[3 * d + 1];
    const auto& again = rows[3 * d + 2];
    CHECK(flat.at("status") == "ok");
    for (const char* col : {"pseudo_r2", "mean_deviance", "mean_crps", "balance", "autocal_p"}) {
      CHECK(deep.at(col) == again.at(col));
    }
    // Rank by hand: one plus the number of better rows, ties split evenly.
    const std::vector<const std::map<std::string, std::string>*> group{&flat, &deep, &again};
    for (const auto* r : group) {
      const double mine = std::stod(r->at("pseudo_r2"));
      double expect = 1.0;
      for (const auto* o : group) {
        if (o == r) continue;
        const double other = std::stod(o->at("pseudo_r2"));
        if (other > mine) expect += 1.0;
        if (other == mine) expect += 0.5;
      }
      CHECK(std::stod(r->at("rank_pseudo_r2")) == expect);
      by_label[r->at("label")].push_back(expect);
    }
    CHECK(deep.at("rank_pseudo_r2") == again.at("rank_pseudo_r2"));
  }
  for (const auto& row : rows) {
    const auto& v = by_label[row.at("label")];
    CHECK(std::stod(row.at("avg_rank_pseudo_r2")) ==
          doctest::Approx((v[0] + v[1] + v[2]) / 3.0).epsilon(1e-15));
  }

  std::ostringstream two;
  two << "[a]\ndata = " << (dir / "tr0.csv").string() << "\ntest = " << (dir / "te0.csv").string()
      << "\nalgo = gbm\niterations = 2\n\n[b]\ndata = " << (dir / "tr0.csv").string()
      << "\ntest = " << (dir / "te0.csv").string() << "\nalgo = newton\niterations = 30\n"
      << "learning-rate = 0.1\n";
  testing::write_file(dir / "two.ini", two.str());
  REQUIRE(cli({"benchmark", "--runs", (dir / "two.ini").string(), "--bootstrap", "0", "--out",
               (dir / "two").string()}) == 0);
  const auto pair = read_table(dir / "two" / "benchmark.csv");
  REQUIRE(pair.size() == 2);
  const double r0 = std::stod(pair[0].at("rank_pseudo_r2"));
  const double r1 = std::stod(pair[1].at("rank_pseudo_r2"));
  CHECK(std::min(r0, r1) == 1.0);
  CHECK(std::max(r0, r1) == 2.0);

  testing::write_file(dir / "one.ini", "[a]\ndata = x.csv\ntest = y.csv\n");
  CHECK(cli({"benchmark", "--runs", (dir / "one.ini").string(), "--out", dir.string()}) == 2);
}

TEST_CASE("a failing benchmark run is recorded and the rest proceed") {
  const auto dir = testing::scratch_dir("cli_bench_fail");
  const auto tr = write_data(dir, "tr.csv", testing::poisson_data(300, 50));
  std::ostringstream ini;
  ini << "[good]\ndata = " << tr.string() << "\ntest = " << tr.string() << "\niterations = 5\n\n"
      << "[bad]\ndata = " << (dir / "nope.csv").string() << "\ntest = " << tr.string() << "\n";
  testing::write_file(dir / "runs.ini", ini.str());
  REQUIRE(cli({"benchmark", "--runs", (dir / "runs.ini").string(), "--bootstrap", "0", "--out",
               dir.string()}) == 0);
  const auto rows = read_table(dir / "benchmark.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].at("status") == "ok");
  CHECK(rows[1].at("status").rfind("failed", 0) == 0);
}

TEST_CASE("config files supply flags and the command line wins") {
  const auto dir = testing::scratch_dir("cli_config");
  const auto data = write_data(dir, "p.csv", testing::poisson_data(300, 13));
  testing::write_file(dir / "run.ini", "[train]\niterations = 7\ndepth = 2\nexposure = e\n");
  REQUIRE(cli({"--config", (dir / "run.ini").string(), "train", "--data", data.string(),
               "--out", (dir / "a").string()}) == 0);
  CHECK(lines(dir / "a" / "training_loss.csv").size() == 8);
  REQUIRE(cli({"--config", (dir / "run.ini").string(), "train", "--data", data.string(),
               "--iterations", "3", "--out", (dir / "b").string()}) == 0);
  CHECK(lines(dir / "b" / "training_loss.csv").size() == 4);
}

TEST_CASE("tune writes a score table and the refit model") {
  const auto dir = testing::scratch_dir("cli_tune");
  const auto data = write_data(dir, "p.csv", testing::poisson_data(800, 14));
  REQUIRE(cli({"tune", "--data", data.string(), "--exposure", "e", "--grid-iterations", "5",
               "10", "--grid-depths", "1", "2", "--grid", "l2=0,1", "--learning-rate", "0.1",
               "--out", dir.string()}) == 0);
  const auto rows = read_table(dir / "score_table.csv");
  CHECK(rows.size() == 8);
  CHECK(rows[0].count("l2") == 1);
  CHECK(fs::exists(dir / "model.json"));
  CHECK(fs::exists(dir / "best_settings.json"));
}
