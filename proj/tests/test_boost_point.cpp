#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "boostlab/boost_point.hpp"
#include "boostlab/error.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace boostlab;

namespace {

BoostConfig quick(int m, int d, double lr) {
  BoostConfig c;
  c.iterations = m;
  c.depth = d;
  c.learning_rate = lr;
  c.subsample = 1.0;
  c.min_leaf_fraction = 0.01;
  return c;
}

const DistributionSpec kPoisson = DistributionSpec::make(Family::kPoisson, 1);
const DistributionSpec kGauss = DistributionSpec::make(Family::kGaussian, 1);

Dataset gaussian_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto cols = testing::uniform_features(n, 3, rng);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::sin(4 * cols[0].values[i]) + cols[1].values[i] +
           0.3 * std::normal_distribution<double>()(rng);
  }
  return testing::make_dataset(std::move(cols), std::move(y));
}

}  // namespace

TEST_CASE("zero iterations predict the exposure-weighted rate") {
  const Dataset ds = testing::poisson_data(500, 1);
  const BoostedModel m = train_gbm(ds, kPoisson, quick(0, 2, 0.1));
  const double rate = std::accumulate(ds.target.begin(), ds.target.end(), 0.0) /
                      std::accumulate(ds.exposure.begin(), ds.exposure.end(), 0.0);
  for (std::size_t i = 0; i < ds.size(); i += 37) {
    CHECK(m.predict(ds, i) == doctest::Approx(ds.exposure[i] * rate).epsilon(1e-12));
  }
  CHECK(m.trees.empty());
}

TEST_CASE("doubling one exposure doubles its prediction") {
  Dataset ds = testing::poisson_data(400, 2);
  const BoostedModel m = train_newton(ds, kPoisson, quick(20, 2, 0.1));
  const double before = m.predict(ds, 5);
  Dataset twice = ds;
  twice.exposure[5] *= 2.0;
  CHECK(m.predict(twice, 5) == doctest::Approx(2.0 * before).epsilon(1e-14));
  CHECK(m.predict(twice, 6) == m.predict(ds, 6));
}

TEST_CASE("one full-sample line-search step centres the residuals per leaf") {
  const Dataset ds = gaussian_data(300, 3);
  BoostConfig c = quick(1, 8, 1.0);
  c.min_leaf_fraction = 0.0;
  c.min_leaf = 5;
  const BoostedModel m = train_gbm(ds, kGauss, c);
  REQUIRE(m.trees.size() == 1);
  const BinMap& bins = m.bins;
  const BinnedMatrix x = bin_dataset(bins, ds);
  std::map<int, std::pair<double, int>> by_leaf;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& [s, k] = by_leaf[m.trees[0].tree.leaf_for_binned(x, i)];
    s += ds.target[i] - m.linked(ds, i);
    k += 1;
  }
  for (const auto& [leaf, sk] : by_leaf) CHECK(std::abs(sk.first / sk.second) < 1e-10);
}

TEST_CASE("gbm training loss never increases with full samples") {
  const Dataset ds = testing::poisson_data(2000, 4);
  const BoostedModel m = train_gbm(ds, kPoisson, quick(200, 3, 0.1));
  REQUIRE(m.history.size() == 200);
  for (std::size_t k = 1; k < m.history.size(); ++k) {
    REQUIRE(m.history[k].mean_nll <= m.history[k - 1].mean_nll + 1e-15);
  }
}

TEST_CASE("newton and line search agree for squared error") {
  const Dataset ds = gaussian_data(500, 5);
  const BoostedModel a = train_gbm(ds, kGauss, quick(30, 3, 0.2));
  const BoostedModel b = train_newton(ds, kGauss, quick(30, 3, 0.2));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    REQUIRE(a.linked(ds, i) == doctest::Approx(b.linked(ds, i)).epsilon(1e-10));
  }
}

TEST_CASE("dart that never drops is plain newton") {
  const Dataset ds = testing::poisson_data(800, 6);
  BoostConfig c = quick(40, 3, 0.1);
  c.subsample = 0.75;
  c.col_fraction = 0.7;
  c.seed = 12;
  const BoostedModel plain = train_newton(ds, kPoisson, c);
  c.dart.enabled = true;
  c.dart.drop_rate = 0.0;
  c.dart.skip_prob = 1.0;
  const BoostedModel dart = train_newton(ds, kPoisson, c);
  CHECK(plain.to_json().dump() == dart.to_json().dump());
}

TEST_CASE("dart rescales tree weights") {
  const Dataset ds = testing::poisson_data(600, 7);
  BoostConfig c = quick(30, 2, 0.2);
  c.dart.enabled = true;
  c.dart.drop_rate = 0.3;
  const BoostedModel m = train_newton(ds, kPoisson, c);
  bool some_rescaled = false;
  for (const auto& t : m.trees) {
    CHECK(t.weight > 0.0);
    CHECK(t.weight <= c.learning_rate);
    if (t.weight < c.learning_rate) some_rescaled = true;
  }
  CHECK(some_rescaled);
  // The final F is the weighted sum of the trees.
  const BinnedMatrix x = bin_dataset(m.bins, ds);
  for (std::size_t i = 0; i < ds.size(); i += 50) {
    double f = m.init;
    for (const auto& t : m.trees) f += t.weight * t.tree.predict_binned(x, i);
    CHECK(m.linked(ds, i) == doctest::Approx(f).epsilon(1e-12));
  }
  CHECK_THROWS_AS(train_gbm(ds, kPoisson, c), ConfigError);
}

TEST_CASE("huge gain threshold or ridge leaves the init model") {
  const Dataset ds = testing::poisson_data(500, 8);
  BoostConfig c = quick(10, 3, 0.5);
  c.min_gain = 1e300;
  const BoostedModel g = train_newton(ds, kPoisson, c);
  c.min_gain = 0.0;
  c.l2 = 1e300;
  const BoostedModel r = train_newton(ds, kPoisson, c);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    // The root leaf is -G/H at the fitted intercept, zero up to rounding.
    REQUIRE(std::abs(g.linked(ds, i) - g.init) < 1e-12);
    REQUIRE(std::abs(r.linked(ds, i) - r.init) < 1e-300);
  }
}

TEST_CASE("tree contributions add up to the linked prediction") {
  const Dataset ds = testing::poisson_data(700, 9);
  const BoostedModel m = train_newton(ds, kPoisson, quick(50, 3, 0.1));
  for (std::size_t i = 0; i < ds.size(); i += 7) {
    double s = 0.0;
    for (const auto& t : m.trees) s += t.weight * t.tree.predict_row(ds, i);
    REQUIRE(std::abs(m.linked(ds, i) - m.init - s) < 1e-12);
    REQUIRE(m.predict(ds, i) > 0.0);
  }
}

TEST_CASE("scaling every exposure leaves the trees unchanged") {
  const Dataset ds = testing::poisson_data(800, 10);
  Dataset scaled = ds;
  for (auto& e : scaled.exposure) e *= 3.7;
  BoostConfig c = quick(30, 3, 0.1);
  c.subsample = 0.75;
  const BoostedModel a = train_newton(ds, kPoisson, c);
  const BoostedModel b = train_newton(scaled, kPoisson, c);
  REQUIRE(a.trees.size() == b.trees.size());
  for (std::size_t m = 0; m < a.trees.size(); ++m) {
    // e / mean(e) is only equal up to rounding after scaling, so splits must match
    // exactly and leaf values to within a few ulps.
    const auto& na = a.trees[m].tree.nodes;
    const auto& nb = b.trees[m].tree.nodes;
    REQUIRE(na.size() == nb.size());
    for (std::size_t k = 0; k < na.size(); ++k) {
      REQUIRE(na[k].feature == nb[k].feature);
      REQUIRE(na[k].threshold_bin == nb[k].threshold_bin);
      REQUIRE(na[k].count == nb[k].count);
      REQUIRE(na[k].value == doctest::Approx(nb[k].value).epsilon(1e-10));
    }
    REQUIRE(a.trees[m].weight == b.trees[m].weight);
  }
  CHECK(a.init == doctest::Approx(b.init).epsilon(1e-13));
  for (std::size_t i = 0; i < ds.size(); i += 11) {
    // Same counts were observed, so the fitted means on the training rows agree.
    CHECK(b.predict(scaled, i) == doctest::Approx(a.predict(ds, i)).epsilon(1e-10));
  }
}

TEST_CASE("power-of-two exposure scaling is exact") {
  const Dataset ds = testing::poisson_data(800, 18);
  BoostConfig c = quick(30, 3, 0.1);
  c.subsample = 0.75;
  const BoostedModel a = train_newton(ds, kPoisson, c);
  for (const double k : {2.0, 0.25}) {
    Dataset scaled = ds;
    for (auto& e : scaled.exposure) e *= k;
    const BoostedModel b = train_newton(scaled, kPoisson, c);
    REQUIRE(a.trees.size() == b.trees.size());
    for (std::size_t m = 0; m < a.trees.size(); ++m) REQUIRE(a.trees[m].tree == b.trees[m].tree);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      REQUIRE(a.predict(scaled, i) == k * a.predict(ds, i));
    }
  }
}

TEST_CASE("models survive json") {
  const Dataset ds = testing::poisson_data(300, 11);
  const BoostedModel m = train_newton(ds, kPoisson, quick(15, 2, 0.1));
  const BoostedModel back = BoostedModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  for (std::size_t i = 0; i < ds.size(); ++i) REQUIRE(back.predict(ds, i) == m.predict(ds, i));
}

TEST_CASE("two-parameter point families") {
  std::mt19937_64 rng(12);
  const std::size_t n = 1500;
  auto cols = testing::uniform_features(n, 2, rng);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = std::exp(1.0 + cols[0].values[i]);
    y[i] = std::gamma_distribution<double>(3.0, mu / 3.0)(rng);
  }
  const Dataset ds = testing::make_dataset(std::move(cols), std::move(y));
  const BoostedModel m = train_newton(ds, DistributionSpec::make(Family::kGamma, 1), quick(60, 2, 0.1));
  CHECK(m.aux.value == doctest::Approx(3.0).epsilon(0.15));
  CHECK(m.history.back().mean_nll < m.history.front().mean_nll);
  CHECK_THROWS_AS(train_newton(ds, DistributionSpec::make(Family::kGamma, 2), quick(1, 1, 0.1)),
                  ConfigError);
}

TEST_CASE("egbm with one feature is a stump booster") {
  std::mt19937_64 rng(13);
  const std::size_t n = 400;
  auto cols = testing::uniform_features(n, 1, rng);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = std::cos(5 * cols[0].values[i]) + 0.2 * std::normal_distribution<double>()(rng);
  const Dataset ds = testing::make_dataset(std::move(cols), std::move(y));
  const BoostConfig c = quick(40, 1, 0.2);
  const EgbmModel e = train_egbm(ds, kGauss, c);
  const BoostedModel g = train_gbm(ds, kGauss, c);
  for (std::size_t i = 0; i < n; ++i) {
    REQUIRE(e.linked(ds, i) == doctest::Approx(g.linked(ds, i)).epsilon(1e-10));
  }
}

TEST_CASE("egbm is additive over its lookups") {
  std::mt19937_64 rng(14);
  const std::size_t n = 1000;
  auto cols = testing::uniform_features(n, 3, rng);
  cols.push_back(testing::numeric("flat", std::vector<double>(n, 2.0)));
  std::vector<double> y(n);
  std::vector<double> e(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = std::exp(cols[0].values[i] + (cols[1].values[i] > 0.5) * (cols[2].values[i] > 0.5));
    y[i] = static_cast<double>(std::poisson_distribution<int>(mu)(rng));
  }
  const Dataset ds = testing::make_dataset(std::move(cols), std::move(y), std::move(e));
  BoostConfig c = quick(30, 1, 0.2);
  c.interactions = 3;
  const EgbmModel m = train_egbm(ds, kPoisson, c);
  CHECK(m.pairs.size() == 3);
  CHECK(m.interactions.size() == 3);
  for (const double v : m.main_effects[3]) CHECK(v == 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double f = m.intercept;
    std::vector<std::uint32_t> bin(4);
    for (std::size_t j = 0; j < 4; ++j) {
      bin[j] = m.bins.features[j].bin(ds.features[j].values[i]);
      f += m.main_effects[j][bin[j]];
    }
    for (std::size_t q = 0; q < m.pairs.size(); ++q) {
      const auto [a, b] = m.pairs[q];
      f += m.interactions[q][bin[a] * m.bins.features[b].num_bins() + bin[b]];
    }
    REQUIRE(m.linked(ds, i) == f);
  }
  const EgbmModel back = EgbmModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  for (std::size_t i = 0; i < n; i += 13) REQUIRE(back.predict(ds, i) == m.predict(ds, i));
}

TEST_CASE("fast ranks the xor pair first") {
  std::mt19937_64 rng(15);
  const std::size_t n = 2000;
  auto cols = testing::uniform_features(n, 4, rng);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool a = cols[1].values[i] > 0.5;
    const bool b = cols[3].values[i] > 0.5;
    y[i] = (a != b ? 1.0 : -1.0) + 0.5 * std::normal_distribution<double>()(rng);
  }
  const Dataset ds = testing::make_dataset(std::move(cols), y);
  const TrainingFrame frame = TrainingFrame::build(ds, kGauss, 256);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - mean;
  const auto top = fast_select(frame, r, 1, 8);
  REQUIRE(top.size() == 1);
  CHECK(top[0] == std::pair<std::size_t, std::size_t>{1, 3});
  CHECK(fast_select(frame, r, 0, 8).empty());
  CHECK(fast_select(frame, r, 100, 8).size() == 6);
}

TEST_CASE("loss csv has one row per record") {
  const Dataset ds = testing::poisson_data(100, 16);
  const BoostedModel m = train_gbm(ds, kPoisson, quick(100, 2, 0.1));
  std::ostringstream out;
  write_loss_csv(out, m.history);
  const std::string s = out.str();
  CHECK(std::count(s.begin(), s.end(), '\n') == 101);  // header plus one row per iteration
  CHECK(s.rfind("iteration,mean_nll,mean_deviance\n", 0) == 0);
}

TEST_CASE("invalid configs") {
  const Dataset ds = testing::poisson_data(100, 17);
  BoostConfig c = quick(10, 2, 0.1);
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(train_gbm(ds, kPoisson, c), ConfigError);
  c = quick(10, 2, 0.1);
  c.subsample = 1.5;
  CHECK_THROWS_AS(train_gbm(ds, kPoisson, c), ConfigError);
  c = quick(10, 2, 0.1);
  c.dart.enabled = true;
  c.dart.drop_rate = 1.0;
  CHECK_THROWS_AS(train_newton(ds, kPoisson, c), ConfigError);
}
