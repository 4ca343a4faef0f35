#include "boostlab/dist.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "boostlab/error.hpp"
#include "boostlab/optimize.hpp"

namespace boostlab {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kSigmaFloor = 1e-6;

bool is_integer(double y) { return y == std::floor(y) && y < 1e6; }

// lgamma(y + phi) - lgamma(phi); exact sums for integer y keep precision when
// phi is huge.
double delta_lgamma(double y, double phi) {
  if (is_integer(y) && y <= 1000.0) {
    double s = 0.0;
    for (int j = 0; j < static_cast<int>(y); ++j) s += std::log(phi + j);
    return s;
  }
  return std::lgamma(y + phi) - std::lgamma(phi);
}

// digamma(y + phi) - digamma(phi).
double delta_digamma(double y, double phi) {
  if (is_integer(y) && y <= 1000.0) {
    double s = 0.0;
    for (int j = 0; j < static_cast<int>(y); ++j) s += 1.0 / (phi + j);
    return s;
  }
  return boost::math::digamma(y + phi) - boost::math::digamma(phi);
}

// trigamma(phi) - trigamma(y + phi).
double delta_trigamma(double y, double phi) {
  if (is_integer(y) && y <= 1000.0) {
    double s = 0.0;
    for (int j = 0; j < static_cast<int>(y); ++j) s += 1.0 / ((phi + j) * (phi + j));
    return s;
  }
  return boost::math::trigamma(phi) - boost::math::trigamma(y + phi);
}

double std_normal_cdf(double z) { return 0.5 * boost::math::erfc(-z / std::sqrt(2.0)); }

double std_normal_quantile(double q) { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * q); }

// Expected value of trigamma(phi) - trigamma(phi + Y) for Y ~ NB2(m, phi):
// sum_j P(Y > j) / (phi + j)^2.
double nb2_expected_trigamma_gap(double m, double phi) {
  const double p = phi / (m + phi);
  const double log_p0 = phi * std::log(p);
  const double sd = std::sqrt(m + m * m / phi);
  const double j_max = m + 60.0 * sd + 100.0;
  double sum = 0.0;
  if (log_p0 > -700.0) {
    double pmf = std::exp(log_p0);
    double cdf = pmf;
    for (double j = 0.0; j < j_max; j += 1.0) {
      const double tail = 1.0 - cdf;
      if (tail < 1e-16 && j > m) break;
      sum += tail / ((phi + j) * (phi + j));
      pmf *= (phi + j) / (j + 1.0) * (m / (m + phi));
      cdf += pmf;
    }
    return sum;
  }
  for (double j = 0.0; j < j_max; j += 1.0) {
    const double tail = boost::math::ibetac(phi, j + 1.0, p);
    if (tail < 1e-16 && j > m) break;
    sum += tail / ((phi + j) * (phi + j));
  }
  return sum;
}

double count_quantile(const std::function<double(double)>& cdf_at, double start, double q) {
  double k = std::max(0.0, std::floor(start));
  while (cdf_at(k) < q) k += 1.0;
  while (k > 0.0 && cdf_at(k - 1.0) >= q) k -= 1.0;
  return k;
}

// Solves ln(a) - digamma(a) = s for a > 0 (s > 0).
double solve_gamma_shape(double s) {
  if (!(s > 0.0)) return kAuxUpper;
  double a = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
  for (int it = 0; it < 100; ++it) {
    const double f = std::log(a) - boost::math::digamma(a) - s;
    const double fp = 1.0 / a - boost::math::trigamma(a);
    double next = a - f / fp;
    if (!(next > 0.0)) next = 0.5 * a;
    if (std::abs(next - a) < 1e-14 * a) {
      a = next;
      break;
    }
    a = next;
  }
  return std::clamp(a, kAuxLower, kAuxUpper);
}

}  // namespace

std::string to_string(Family family) {
  switch (family) {
    case Family::kPoisson: return "poisson";
    case Family::kNB2: return "nb2";
    case Family::kGamma: return "gamma";
    case Family::kLogNormal: return "lognormal";
    case Family::kGaussian: return "gaussian";
  }
  return "poisson";
}

std::string to_string(Link link) { return link == Link::kLog ? "log" : "identity"; }

Family parse_family(std::string_view text) {
  if (text == "poisson") return Family::kPoisson;
  if (text == "nb2") return Family::kNB2;
  if (text == "gamma") return Family::kGamma;
  if (text == "lognormal") return Family::kLogNormal;
  if (text == "gaussian") return Family::kGaussian;
  throw ConfigError("unknown distribution '" + std::string(text) + "'");
}

Link parse_link(std::string_view text) {
  if (text == "log") return Link::kLog;
  if (text == "identity") return Link::kIdentity;
  throw ConfigError("unknown link '" + std::string(text) + "'");
}

double link_forward(Link link, double p) { return link == Link::kLog ? std::log(p) : p; }
double link_inverse(Link link, double b) { return link == Link::kLog ? std::exp(b) : b; }

DistributionSpec DistributionSpec::make(Family family, int kappa) {
  DistributionSpec d;
  d.family = family;
  d.kappa = kappa;
  const bool real_location = family == Family::kGaussian || family == Family::kLogNormal;
  d.links = {real_location ? Link::kIdentity : Link::kLog, Link::kLog};
  d.fixed_aux = 1.0;
  d.validate();
  return d;
}

void DistributionSpec::validate() const {
  if (kappa != 1 && kappa != 2) throw ConfigError("kappa must be 1 or 2");
  if (kappa > family_params()) {
    throw ConfigError(to_string(family) +
                      " has a single parameter; probabilistic algorithms need nb2, gamma, "
                      "lognormal or gaussian");
  }
  const bool real_location = family == Family::kGaussian || family == Family::kLogNormal;
  if (!real_location && links[0] != Link::kLog) {
    throw ConfigError("the mean of " + to_string(family) + " is positive and needs a log link");
  }
  if (kappa == 2 && links[1] != Link::kLog) {
    throw ConfigError("the second parameter of " + to_string(family) +
                      " is positive and needs a log link");
  }
  if (has_aux() && !(fixed_aux > 0.0 && std::isfinite(fixed_aux))) {
    throw ConfigError("fixed auxiliary parameter must be positive");
  }
}

void DistributionSpec::check_support(double y) const {
  if (!std::isfinite(y)) throw DataError("non-finite response");
  if (positive_support() && !(y > 0.0)) {
    throw DataError(to_string(family) + " needs strictly positive responses, got " +
                    std::to_string(y));
  }
  if (count_family() && y < 0.0) {
    throw DataError(to_string(family) + " needs non-negative responses, got " + std::to_string(y));
  }
}

Natural to_natural(const DistributionSpec& dist, const ParamVector& params, double offset) {
  Natural p{0.0, dist.fixed_aux};
  p[0] = link_inverse(dist.links[0], params[0] + (dist.uses_offset() ? offset : 0.0));
  if (dist.kappa == 2) p[1] = link_inverse(dist.links[1], params[1]);
  return p;
}

ParamVector to_linked(const DistributionSpec& dist, const Natural& natural) {
  ParamVector b;
  b.size = dist.kappa;
  b[0] = link_forward(dist.links[0], natural[0]);
  if (dist.kappa == 2) b[1] = link_forward(dist.links[1], natural[1]);
  return b;
}

double nll_natural(const DistributionSpec& dist, const Natural& p, double y) {
  dist.check_support(y);
  const double m = p[0];
  const double a = p[1];
  switch (dist.family) {
    case Family::kPoisson:
      return (y == 0.0 ? m : m - y * std::log(m)) + std::lgamma(y + 1.0);
    case Family::kNB2: {
      const double yterm = y == 0.0 ? 0.0 : y * std::log(m / (m + a));
      return -delta_lgamma(y, a) + std::lgamma(y + 1.0) - yterm + a * std::log1p(m / a);
    }
    case Family::kGamma:
      return -a * std::log(a) + a * std::log(m) + std::lgamma(a) - (a - 1.0) * std::log(y) +
             a * y / m;
    case Family::kGaussian: {
      const double r = (y - m) / a;
      return kHalfLog2Pi + std::log(a) + 0.5 * r * r;
    }
    case Family::kLogNormal: {
      const double ly = std::log(y);
      const double r = (ly - m) / a;
      return kHalfLog2Pi + std::log(a) + 0.5 * r * r + ly;
    }
  }
  return 0.0;
}

double nll(const DistributionSpec& dist, const ParamVector& params, double y, double offset) {
  return nll_natural(dist, to_natural(dist, params, offset), y);
}

Derivatives natural_derivatives(const DistributionSpec& dist, const Natural& p, double y) {
  dist.check_support(y);
  const double m = p[0];
  const double a = p[1];
  Derivatives d;
  switch (dist.family) {
    case Family::kPoisson:
      d.d1[0] = 1.0 - y / m;
      d.d2[0] = y / (m * m);
      break;
    case Family::kNB2: {
      const double s = m + a;
      d.d1[0] = -y / m + (y + a) / s;
      d.d2[0] = y / (m * m) - (y + a) / (s * s);
      d.d1[1] = std::log1p(m / a) + (y - m) / s - delta_digamma(y, a);
      d.d2[1] = delta_trigamma(y, a) - m / (a * s) + (m - y) / (s * s);
      d.cross = (m - y) / (s * s);
      break;
    }
    case Family::kGamma:
      d.d1[0] = a / m - a * y / (m * m);
      d.d2[0] = -a / (m * m) + 2.0 * a * y / (m * m * m);
      d.d1[1] = -std::log(a) - 1.0 + std::log(m) + boost::math::digamma(a) - std::log(y) + y / m;
      d.d2[1] = -1.0 / a + boost::math::trigamma(a);
      d.cross = 1.0 / m - y / (m * m);
      break;
    case Family::kGaussian:
    case Family::kLogNormal: {
      const double z = dist.family == Family::kLogNormal ? std::log(y) : y;
      const double r = z - m;
      const double a2 = a * a;
      d.d1[0] = -r / a2;
      d.d2[0] = 1.0 / a2;
      d.d1[1] = 1.0 / a - r * r / (a2 * a);
      d.d2[1] = -1.0 / a2 + 3.0 * r * r / (a2 * a2);
      d.cross = 2.0 * r / (a2 * a);
      break;
    }
  }
  return d;
}

Derivatives linked_derivatives(const DistributionSpec& dist, const ParamVector& params, double y,
                               double offset) {
  const Natural p = to_natural(dist, params, offset);
  const Derivatives n = natural_derivatives(dist, p, y);
  Derivatives d;
  std::array<double, 2> h1{1.0, 1.0};  // dp/db
  std::array<double, 2> h2{0.0, 0.0};  // d2p/db2
  for (int k = 0; k < dist.kappa; ++k) {
    if (dist.links[static_cast<std::size_t>(k)] == Link::kLog) {
      h1[static_cast<std::size_t>(k)] = p[static_cast<std::size_t>(k)];
      h2[static_cast<std::size_t>(k)] = p[static_cast<std::size_t>(k)];
    }
  }
  for (std::size_t k = 0; k < static_cast<std::size_t>(dist.kappa); ++k) {
    d.d1[k] = n.d1[k] * h1[k];
    d.d2[k] = n.d2[k] * h1[k] * h1[k] + n.d1[k] * h2[k];
  }
  if (dist.kappa == 2) d.cross = n.cross * h1[0] * h1[1];
  return d;
}

double derivative(const DistributionSpec& dist, const ParamVector& params, double y, double offset,
                  int k, int order) {
  if (k < 0 || k >= dist.kappa) throw ConfigError("parameter index out of range");
  const Derivatives d = linked_derivatives(dist, params, y, offset);
  const auto kk = static_cast<std::size_t>(k);
  if (order == 1) return -d.d1[kk];
  if (order == 2) return d.d2[kk];
  throw ConfigError("derivative order must be 1 or 2");
}

Sym2 natural_fisher(const DistributionSpec& dist, const Natural& p) {
  const double m = p[0];
  const double a = p[1];
  Sym2 f;
  switch (dist.family) {
    case Family::kPoisson:
      throw ConfigError("fisher information needs a two-parameter family");
    case Family::kNB2:
      f.a11 = a / (m * (m + a));
      f.a22 = nb2_expected_trigamma_gap(m, a) - m / (a * (m + a));
      break;
    case Family::kGamma:
      f.a11 = a / (m * m);
      f.a22 = boost::math::trigamma(a) - 1.0 / a;
      break;
    case Family::kGaussian:
    case Family::kLogNormal:
      f.a11 = 1.0 / (a * a);
      f.a22 = 2.0 / (a * a);
      break;
  }
  return f;
}

Sym2 fisher_matrix(const DistributionSpec& dist, const ParamVector& params, double offset) {
  if (dist.kappa != 2) throw ConfigError("fisher information needs kappa = 2");
  const Natural p = to_natural(dist, params, offset);
  Sym2 f = natural_fisher(dist, p);
  const double j0 = dist.links[0] == Link::kLog ? p[0] : 1.0;
  const double j1 = dist.links[1] == Link::kLog ? p[1] : 1.0;
  f.a11 *= j0 * j0;
  f.a12 *= j0 * j1;
  f.a22 *= j1 * j1;
  if (!std::isfinite(f.a11) || !std::isfinite(f.a12) || !std::isfinite(f.a22)) {
    throw NumericalError("non-finite fisher information");
  }
  return f;
}

NaturalGradient natural_gradient(const DistributionSpec& dist, const ParamVector& params, double y,
                                 double offset) {
  const Derivatives d = linked_derivatives(dist, params, y, offset);
  NaturalGradient out;
  Sym2 f;
  try {
    f = fisher_matrix(dist, params, offset);
  } catch (const NumericalError&) {
    out.direction = d.d1;
    out.fallback = true;
    return out;
  }
  const double det = f.det();
  if (!(f.a11 > 0.0) || !(det > 1e-14 * f.a11 * f.a22) || !std::isfinite(det)) {
    out.direction = d.d1;
    out.fallback = true;
    return out;
  }
  out.direction[0] = (f.a22 * d.d1[0] - f.a12 * d.d1[1]) / det;
  out.direction[1] = (f.a11 * d.d1[1] - f.a12 * d.d1[0]) / det;
  return out;
}

double unit_deviance(const DistributionSpec& dist, double y, double location, double aux) {
  dist.check_support(y);
  const double m = location;
  switch (dist.family) {
    case Family::kPoisson:
      return y == 0.0 ? 2.0 * m : 2.0 * (y * std::log(y / m) - (y - m));
    case Family::kNB2:
      if (y == 0.0) return 2.0 * aux * std::log1p(m / aux);
      return 2.0 * (y * std::log(y / m) - (y + aux) * std::log((y + aux) / (m + aux)));
    case Family::kGamma:
      return 2.0 * aux * ((y - m) / m - std::log(y / m));
    case Family::kGaussian:
      return (y - m) * (y - m) / (aux * aux);
    case Family::kLogNormal: {
      const double r = std::log(y) - m;
      return r * r / (aux * aux);
    }
  }
  return 0.0;
}

double metric_deviance(Family family, double y, double location) {
  const Family f = family == Family::kNB2 ? Family::kPoisson : family;
  return unit_deviance(DistributionSpec::make(f, 1), y, location, 1.0);
}

double mean(const DistributionSpec& dist, const ParamVector& params, double offset) {
  const Natural p = to_natural(dist, params, offset);
  if (dist.family == Family::kLogNormal) return std::exp(p[0] + 0.5 * p[1] * p[1]);
  return p[0];
}

double cdf(const DistributionSpec& dist, const ParamVector& params, double y, double offset) {
  const Natural p = to_natural(dist, params, offset);
  const double m = p[0];
  const double a = p[1];
  switch (dist.family) {
    case Family::kPoisson: {
      if (y < 0.0) return 0.0;
      return boost::math::gamma_q(std::floor(y) + 1.0, m);
    }
    case Family::kNB2: {
      if (y < 0.0) return 0.0;
      return boost::math::ibeta(a, std::floor(y) + 1.0, a / (m + a));
    }
    case Family::kGamma:
      if (y <= 0.0) return 0.0;
      return boost::math::gamma_p(a, a * y / m);
    case Family::kGaussian:
      return std_normal_cdf((y - m) / a);
    case Family::kLogNormal:
      if (y <= 0.0) return 0.0;
      return std_normal_cdf((std::log(y) - m) / a);
  }
  return 0.0;
}

double quantile(const DistributionSpec& dist, const ParamVector& params, double q,
                double offset) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantile level must lie strictly in (0, 1)");
  const Natural p = to_natural(dist, params, offset);
  const double m = p[0];
  const double a = p[1];
  switch (dist.family) {
    case Family::kPoisson:
    case Family::kNB2: {
      const double sd = std::sqrt(dist.family == Family::kPoisson ? m : m + m * m / a);
      const double start = m + sd * std_normal_quantile(q);
      return count_quantile([&](double k) { return cdf(dist, params, k, offset); }, start, q);
    }
    case Family::kGamma:
      return boost::math::gamma_p_inv(a, q) * m / a;
    case Family::kGaussian:
      return m + a * std_normal_quantile(q);
    case Family::kLogNormal:
      return std::exp(m + a * std_normal_quantile(q));
  }
  return 0.0;
}

double pmf(const DistributionSpec& dist, const ParamVector& params, double k, double offset) {
  if (!dist.count_family()) throw ConfigError("pmf needs a count family");
  if (k < 0.0 || k != std::floor(k)) return 0.0;
  return std::exp(-nll(dist, params, k, offset));
}

ParamVector init_mle(const DistributionSpec& dist, std::span<const double> y,
                     std::span<const double> offsets) {
  dist.validate();
  const std::size_t n = y.size();
  if (n == 0) throw DataError("cannot initialise on an empty response");
  if (!offsets.empty() && offsets.size() != n) throw DataError("offset length differs from y");
  for (const double v : y) dist.check_support(v);
  auto offset = [&](std::size_t i) { return offsets.empty() ? 0.0 : offsets[i]; };

  const double sum_y = std::accumulate(y.begin(), y.end(), 0.0);
  Natural p{0.0, dist.fixed_aux};
  ParamVector out;
  out.size = dist.kappa;

  switch (dist.family) {
    case Family::kPoisson:
    case Family::kNB2: {
      if (sum_y <= 0.0) {
        throw NumericalError("all responses are zero: the mean has no finite maximum-likelihood "
                             "estimate");
      }
      double sum_e = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum_e += std::exp(offset(i));
      out[0] = std::log(sum_y / sum_e);
      if (dist.family == Family::kPoisson) return out;

      // Alternate exact minimizations in b0 and ln(phi).
      double phi = dist.kappa == 2 ? 1.0 : dist.fixed_aux;
      DistributionSpec nb = dist;
      nb.kappa = 2;
      ParamVector b;
      b.size = 2;
      b[0] = out[0];
      b[1] = std::log(phi);
      for (int sweep = 0; sweep < 200; ++sweep) {
        const ParamVector before = b;
        const auto slope0 = [&](double x) {
          ParamVector t = b;
          t[0] = x;
          double s = 0.0;
          double c = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const Derivatives d = linked_derivatives(nb, t, y[i], offset(i));
            s += d.d1[0];
            c += d.d2[0];
          }
          return std::make_pair(s, c);
        };
        b[0] = minimize_convex(slope0, b[0], b[0] - 30.0, b[0] + 30.0).x;
        if (dist.kappa == 1) break;
        const auto slope1 = [&](double x) {
          ParamVector t = b;
          t[1] = x;
          double s = 0.0;
          double c = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const Derivatives d = linked_derivatives(nb, t, y[i], offset(i));
            s += d.d1[1];
            c += d.d2[1];
          }
          return std::make_pair(s, c);
        };
        const double lo = std::log(kAuxLower);
        const double hi = std::log(kAuxUpper);
        b[1] = minimize_convex(slope1, std::clamp(b[1], lo, hi), lo, hi).x;
        if (std::abs(b[0] - before[0]) < 1e-12 && std::abs(b[1] - before[1]) < 1e-12) break;
      }
      out[0] = b[0];
      if (dist.kappa == 2) out[1] = b[1];
      return out;
    }
    case Family::kGamma: {
      p[0] = sum_y / static_cast<double>(n);
      if (dist.kappa == 2) {
        double mean_log = 0.0;
        for (const double v : y) mean_log += std::log(v);
        mean_log /= static_cast<double>(n);
        p[1] = solve_gamma_shape(std::log(p[0]) - mean_log);
      }
      break;
    }
    case Family::kGaussian:
    case Family::kLogNormal: {
      const bool log_scale = dist.family == Family::kLogNormal;
      double mu = 0.0;
      for (const double v : y) mu += log_scale ? std::log(v) : v;
      mu /= static_cast<double>(n);
      double ss = 0.0;
      for (const double v : y) {
        const double r = (log_scale ? std::log(v) : v) - mu;
        ss += r * r;
      }
      p[0] = mu;
      p[1] = std::max(std::sqrt(ss / static_cast<double>(n)), kSigmaFloor);
      break;
    }
  }
  if (dist.links[0] == Link::kLog && !(p[0] > 0.0)) {
    throw NumericalError("initial mean is not positive under a log link");
  }
  return to_linked(dist, p);
}

AuxEstimate global_aux_mle(const DistributionSpec& dist, std::span<const double> y,
                           std::span<const double> location) {
  if (y.size() != location.size() || y.empty()) {
    throw DataError("global_aux_mle: y and location must have equal nonzero length");
  }
  const auto n = static_cast<double>(y.size());
  for (const double v : y) dist.check_support(v);
  AuxEstimate out;
  switch (dist.family) {
    case Family::kPoisson:
      throw ConfigError("poisson has no auxiliary parameter");
    case Family::kGaussian:
    case Family::kLogNormal: {
      double ss = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double z = dist.family == Family::kLogNormal ? std::log(y[i]) : y[i];
        ss += (z - location[i]) * (z - location[i]);
      }
      out.value = std::sqrt(ss / n);
      if (!(out.value > kAuxLower)) {
        out.value = kAuxLower;
        out.at_bound = true;
      }
      return out;
    }
    case Family::kGamma: {
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double r = y[i] / location[i];
        s += r - std::log(r) - 1.0;
      }
      s /= n;
      if (!(s > 1.0 / kAuxUpper)) {
        out.value = kAuxUpper;
        out.at_bound = true;
        return out;
      }
      out.value = solve_gamma_shape(s);
      out.at_bound = out.value >= kAuxUpper || out.value <= kAuxLower;
      return out;
    }
    case Family::kNB2: {
      DistributionSpec nb = DistributionSpec::make(Family::kNB2, 1);
      const auto slope = [&](double t) {
        const double phi = std::exp(t);
        double s1 = 0.0;
        double s2 = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
          const Derivatives d = natural_derivatives(nb, {location[i], phi}, y[i]);
          s1 += d.d1[1];
          s2 += d.d2[1];
        }
        return std::make_pair(phi * s1, phi * s1 + phi * phi * s2);
      };
      const double lo = std::log(kAuxLower);
      const double hi = std::log(kAuxUpper);
      const ScalarMinimum r = minimize_convex(slope, 0.0, lo, hi);
      out.value = std::exp(r.x);
      out.at_bound = r.clamped;
      return out;
    }
  }
  return out;
}

}  // namespace boostlab
