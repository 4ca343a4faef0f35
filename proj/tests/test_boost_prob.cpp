#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <numeric>
#include <random>

#include "boostlab/boost_prob.hpp"
#include "boostlab/error.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace boostlab;

namespace {

const DistributionSpec kGauss2 = DistributionSpec::make(Family::kGaussian, 2);
const DistributionSpec kGamma2 = DistributionSpec::make(Family::kGamma, 2);

Dataset gamma_data(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto cols = testing::uniform_features(n, 3, rng);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = std::exp(0.5 + cols[0].values[i]);
    const double shape = std::exp(0.5 + 1.5 * cols[1].values[i]);
    y[i] = std::gamma_distribution<double>(shape, mu / shape)(rng);
  }
  return testing::make_dataset(std::move(cols), std::move(y));
}

// Gamma shape MLE by bisection on log a - digamma(a) = log(mean y) - mean(log y).
double gamma_shape_mle(const std::vector<double>& y) {
  double m = 0.0;
  double ml = 0.0;
  for (const double v : y) {
    m += v;
    ml += std::log(v);
  }
  m /= static_cast<double>(y.size());
  ml /= static_cast<double>(y.size());
  const double target = std::log(m) - ml;
  double lo = 1e-6;
  double hi = 1e6;
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (std::log(mid) - boost::math::digamma(mid) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::sqrt(lo * hi);
}

LssConfig lss_config(int m, int d, double lr) {
  LssConfig c;
  c.boost.iterations = m;
  c.boost.depth = d;
  c.boost.learning_rate = lr;
  return c;
}

CycConfig cyc_config(int m1, int d1, int m2, int d2, double lr) {
  CycConfig c;
  c.params[0] = {m1, d1, lr};
  c.params[1] = {m2, d2, lr};
  c.boost.subsample = 1.0;
  return c;
}

double heldout_nll(const DistributionSpec& dist, const std::vector<Natural>& p, const Dataset& ds) {
  double s = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) s += nll_natural(dist, p[i], ds.target[i]);
  return s / static_cast<double>(ds.size());
}

}  // namespace

TEST_CASE("no iterations give the joint constant mle") {
  const Dataset g = gamma_data(800, 1);
  const double shape = gamma_shape_mle(g.target);
  const double mean = std::accumulate(g.target.begin(), g.target.end(), 0.0) /
                      static_cast<double>(g.size());

  LssConfig lss = lss_config(0, 2, 0.1);
  lss.q_max = 0;
  BoostConfig ng;
  ng.iterations = 0;
  const ProbModel a = train_lss(g, kGamma2, lss);
  const ProbModel b = train_cyc(g, kGamma2, cyc_config(0, 2, 0, 2, 0.1));
  const ProbModel c = train_ngboost(g, kGamma2, ng);
  for (const ProbModel* m : {&a, &b, &c}) {
    const Natural p = m->predict(g, 17);
    CHECK(p[0] == doctest::Approx(mean).epsilon(1e-10));
    CHECK(p[1] == doctest::Approx(shape).epsilon(1e-8));
  }

  // Gaussian: sample mean and the 1/n standard deviation.
  const Dataset h = testing::hetero_gaussian(500, 2);
  double mu = 0.0;
  for (const double v : h.target) mu += v;
  mu /= static_cast<double>(h.size());
  double ss = 0.0;
  for (const double v : h.target) ss += (v - mu) * (v - mu);
  const double sigma = std::sqrt(ss / static_cast<double>(h.size()));
  const Natural p = train_cyc(h, kGauss2, cyc_config(0, 1, 0, 1, 0.1)).predict(h, 3);
  CHECK(p[0] == doctest::Approx(mu).epsilon(1e-10));
  CHECK(p[1] == doctest::Approx(sigma).epsilon(1e-10));
}

TEST_CASE("homoscedastic data leaves log sigma nearly flat") {
  std::mt19937_64 rng(3);
  const std::size_t n = 10000;
  auto cols = testing::uniform_features(n, 3, rng);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = 2.0 * cols[0].values[i] + std::normal_distribution<double>()(rng);
  }
  const Dataset ds = testing::make_dataset(std::move(cols), std::move(y));
  LssConfig cfg = lss_config(100, 3, 0.05);
  const ProbModel m = train_lss(ds, kGauss2, cfg);
  // The init sigma also absorbs the spread of the mean, so the trees must shift
  // log sigma down as a whole; flatness is measured around the fitted level.
  std::vector<double> ls(n);
  for (std::size_t i = 0; i < n; ++i) ls[i] = m.linked(ds, i)[1];
  const double level = std::accumulate(ls.begin(), ls.end(), 0.0) / static_cast<double>(n);
  double spread = 0.0;
  for (const double v : ls) spread += std::abs(v - level);
  spread /= static_cast<double>(n);
  MESSAGE("level " << level << " spread " << spread);
  CHECK(std::abs(level) < 0.05);
  CHECK(spread < 0.05);
}

TEST_CASE("heteroscedastic fit beats a global sigma") {
  const Dataset train = testing::hetero_gaussian(5000, 4);
  const Dataset test = testing::hetero_gaussian(5000, 5);
  const ProbModel lss = train_lss(train, kGauss2, lss_config(100, 3, 0.05));

  BoostConfig pc;
  pc.iterations = 100;
  pc.depth = 3;
  pc.learning_rate = 0.05;
  const DistributionSpec g1 = DistributionSpec::make(Family::kGaussian, 1);
  const BoostedModel point = train_newton(train, g1, pc);

  std::vector<Natural> a(test.size());
  std::vector<Natural> b(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    a[i] = lss.predict(test, i);
    b[i] = {point.predict(test, i), point.aux.value};
  }
  const double nll_lss = heldout_nll(kGauss2, a, test);
  const double nll_point = heldout_nll(kGauss2, b, test);
  MESSAGE("lss " << nll_lss << " point " << nll_point);
  CHECK(nll_lss < nll_point);
}

TEST_CASE("cyclic booster with a frozen second parameter") {
  const Dataset ds = gamma_data(1000, 6);
  const ProbModel m = train_cyc(ds, kGamma2, cyc_config(30, 2, 0, 0, 0.2));
  CHECK(m.trees[1].empty());
  CHECK(m.trees[0].size() == 30);
  for (std::size_t i = 0; i < ds.size(); ++i) REQUIRE(m.linked(ds, i)[1] == m.init[1]);

  // Same mean as a one-parameter line-search booster at the fixed shape.
  DistributionSpec g1 = DistributionSpec::make(Family::kGamma, 1);
  g1.fixed_aux = to_natural(kGamma2, m.init)[1];
  BoostConfig pc;
  pc.iterations = 30;
  pc.depth = 2;
  pc.learning_rate = 0.2;
  pc.subsample = 1.0;
  const BoostedModel point = train_gbm(ds, g1, pc);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    REQUIRE(m.predict(ds, i)[0] == doctest::Approx(point.predict(ds, i)).epsilon(1e-9));
  }
}

TEST_CASE("depth zero updates a parameter globally") {
  const Dataset ds = gamma_data(600, 7);
  const ProbModel m = train_cyc(ds, kGamma2, cyc_config(10, 2, 10, 0, 0.5));
  const double first = m.linked(ds, 0)[1];
  for (std::size_t i = 1; i < ds.size(); ++i) REQUIRE(m.linked(ds, i)[1] == first);
  for (const auto& t : m.trees[1]) CHECK(t.tree.nodes.size() == 1);
}

TEST_CASE("cyclic training loss never increases") {
  const Dataset ds = gamma_data(2000, 8);
  const ProbModel m = train_cyc(ds, kGamma2, cyc_config(80, 3, 60, 2, 0.3));
  REQUIRE(m.history.size() == 80);
  for (std::size_t k = 1; k < m.history.size(); ++k) {
    REQUIRE(m.history[k].mean_nll <= m.history[k - 1].mean_nll + 1e-14);
  }
  CHECK(m.history.back().mean_nll < m.history.front().mean_nll);
}

TEST_CASE("natural gradient boosting keeps one step size per iteration") {
  const Dataset ds = gamma_data(800, 9);
  BoostConfig c;
  c.iterations = 25;
  c.depth = 2;
  c.learning_rate = 0.1;
  c.subsample = 1.0;
  const ProbModel m = train_ngboost(ds, kGamma2, c);
  CHECK(m.rho.size() == 25);
  CHECK(m.trees[0].size() == 25);
  CHECK(m.trees[1].size() == 25);
  for (const double r : m.rho) CHECK((r >= 0.0 && r <= 10.0));
  CHECK(m.history.back().mean_nll < m.history.front().mean_nll);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Natural p = m.predict(ds, i);
    REQUIRE((std::isfinite(p[0]) && p[0] > 0.0 && p[1] > 0.0));
  }
}

TEST_CASE("flat natural-gradient trees leave the constant model") {
  // With only root leaves and a constant start, each leaf is the mean natural
  // gradient, which vanishes at the joint mle.
  const Dataset ds = gamma_data(500, 10);
  BoostConfig c;
  c.iterations = 5;
  c.depth = 3;
  c.min_gain = 1e300;
  c.subsample = 1.0;
  const ProbModel m = train_ngboost(ds, kGamma2, c);
  for (std::size_t i = 0; i < ds.size(); i += 7) {
    const ParamVector p = m.linked(ds, i);
    REQUIRE(std::abs(p[0] - m.init[0]) < 1e-10);
    REQUIRE(std::abs(p[1] - m.init[1]) < 1e-10);
  }
}

TEST_CASE("lss cycles and flags") {
  const Dataset ds = gamma_data(1500, 11);
  LssConfig cfg = lss_config(40, 2, 0.1);
  cfg.q_max = 3;
  const ProbModel m = train_lss(ds, kGamma2, cfg);
  CHECK(m.flags.cycles >= 1);
  CHECK(m.flags.cycles <= 4);
  CHECK(m.trees[0].size() == 40);
  CHECK(m.trees[1].size() == 40);
  CHECK(m.history.size() == static_cast<std::size_t>(80 * m.flags.cycles));
  for (std::size_t i = 0; i < ds.size(); i += 11) {
    const Natural p = m.predict(ds, i);
    REQUIRE((p[0] > 0.0 && p[1] > 0.0));
  }
}

TEST_CASE("lognormal sigma stays positive") {
  std::mt19937_64 rng(12);
  const std::size_t n = 800;
  auto cols = testing::uniform_features(n, 2, rng);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(cols[0].values[i] + 0.5 * std::normal_distribution<double>()(rng));
  }
  const Dataset ds = testing::make_dataset(std::move(cols), std::move(y));
  const DistributionSpec ln2 = DistributionSpec::make(Family::kLogNormal, 2);
  const ProbModel m = train_lss(ds, ln2, lss_config(30, 2, 0.1));
  for (std::size_t i = 0; i < n; ++i) REQUIRE(m.predict(ds, i)[1] > 0.0);
}

TEST_CASE("prob models survive json") {
  const Dataset ds = gamma_data(400, 13);
  BoostConfig c;
  c.iterations = 10;
  c.depth = 2;
  c.learning_rate = 0.1;
  const ProbModel m = train_ngboost(ds, kGamma2, c);
  const ProbModel back = ProbModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  CHECK(back.rho == m.rho);
  for (std::size_t i = 0; i < ds.size(); ++i) REQUIRE(back.predict(ds, i) == m.predict(ds, i));
}

TEST_CASE("one-parameter families are rejected") {
  const Dataset ds = testing::poisson_data(100, 14);
  const DistributionSpec p = DistributionSpec::make(Family::kPoisson, 1);
  CHECK_THROWS_AS(train_lss(ds, p, lss_config(5, 2, 0.1)), ConfigError);
  CHECK_THROWS_AS(train_cyc(ds, p, cyc_config(5, 2, 5, 2, 0.1)), ConfigError);
  BoostConfig c;
  c.iterations = 5;
  CHECK_THROWS_AS(train_ngboost(ds, p, c), ConfigError);
}
