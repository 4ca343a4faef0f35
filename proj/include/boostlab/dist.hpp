#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>

namespace boostlab {

enum class Family { kPoisson, kNB2, kGamma, kLogNormal, kGaussian };
enum class Link { kLog, kIdentity };

std::string to_string(Family family);
std::string to_string(Link link);
Family parse_family(std::string_view text);
Link parse_link(std::string_view text);

double link_forward(Link link, double p);
double link_inverse(Link link, double b);

/// Parameters on the linked scale, b_k = link_k(p_k). Only the first `size`
/// entries are meaningful.
struct ParamVector {
  std::array<double, 2> v{0.0, 0.0};
  int size = 1;

  double& operator[](int k) { return v[static_cast<std::size_t>(k)]; }
  double operator[](int k) const { return v[static_cast<std::size_t>(k)]; }
};

/// Natural parameters: (mean, dispersion) for Poisson/NB2/Gamma, (mu, sigma)
/// for Gaussian and for LogNormal, where mu and sigma describe ln Y.
using Natural = std::array<double, 2>;

/// A family with kappa boosted parameters. With kappa = 1 only the location
/// is modelled and the second parameter, if the family has one, is held at
/// `fixed_aux`. The offset (log exposure) is added to the linked mean of
/// Poisson and NB2 only.
struct DistributionSpec {
  Family family = Family::kPoisson;
  int kappa = 1;
  std::array<Link, 2> links{Link::kLog, Link::kLog};
  double fixed_aux = 1.0;

  /// Default links: log for positive parameters, identity for Gaussian and
  /// LogNormal locations.
  static DistributionSpec make(Family family, int kappa);

  void validate() const;
  /// Number of natural parameters (1 for Poisson, 2 otherwise).
  int family_params() const { return family == Family::kPoisson ? 1 : 2; }
  bool has_aux() const { return family_params() == 2; }
  bool count_family() const { return family == Family::kPoisson || family == Family::kNB2; }
  bool uses_offset() const { return count_family(); }
  /// Whether y must be strictly positive (Gamma, LogNormal).
  bool positive_support() const {
    return family == Family::kGamma || family == Family::kLogNormal;
  }
  void check_support(double y) const;
};

Natural to_natural(const DistributionSpec& dist, const ParamVector& params, double offset = 0.0);
ParamVector to_linked(const DistributionSpec& dist, const Natural& natural);

/// Constant linked parameters minimizing the total negative log-likelihood,
/// with per-row offsets (may be empty). For kappa = 1 the auxiliary parameter
/// is held at `fixed_aux`.
ParamVector init_mle(const DistributionSpec& dist, std::span<const double> y,
                     std::span<const double> offsets);

/// Full negative log-likelihood, constants included.
double nll(const DistributionSpec& dist, const ParamVector& params, double y, double offset = 0.0);
double nll_natural(const DistributionSpec& dist, const Natural& p, double y);

struct Derivatives {
  std::array<double, 2> d1{0.0, 0.0};  // dL/db_k
  std::array<double, 2> d2{0.0, 0.0};  // d2L/db_k^2
  double cross = 0.0;                  // d2L/db_0 db_1
};

/// Loss derivatives with respect to the linked parameters.
Derivatives linked_derivatives(const DistributionSpec& dist, const ParamVector& params, double y,
                               double offset = 0.0);

/// order 1: g = -dL/db_k. order 2: t = +d2L/db_k^2.
double derivative(const DistributionSpec& dist, const ParamVector& params, double y, double offset,
                  int k, int order);

/// Loss derivatives with respect to the natural parameters.
Derivatives natural_derivatives(const DistributionSpec& dist, const Natural& p, double y);

/// Symmetric 2x2 matrix.
struct Sym2 {
  double a11 = 0.0;
  double a12 = 0.0;
  double a22 = 0.0;

  double det() const { return a11 * a22 - a12 * a12; }
};

/// Expected Fisher information on the linked scale (kappa = 2 only).
Sym2 fisher_matrix(const DistributionSpec& dist, const ParamVector& params, double offset = 0.0);
/// Expected Fisher information on the natural scale.
Sym2 natural_fisher(const DistributionSpec& dist, const Natural& p);

struct NaturalGradient {
  std::array<double, 2> direction{0.0, 0.0};  // I^{-1} dL/db
  bool fallback = false;                      // Fisher singular: plain gradient returned
};

NaturalGradient natural_gradient(const DistributionSpec& dist, const ParamVector& params, double y,
                                 double offset = 0.0);

/// Unit deviance 2[L(y, p) - L(y, p_sat)] at location `location` (the mean,
/// or the log-scale mean for LogNormal) and auxiliary parameter `aux`.
double unit_deviance(const DistributionSpec& dist, double y, double location, double aux = 1.0);

/// The scale-free deviance used for reporting: Poisson deviance for count
/// families, unit-shape Gamma deviance, squared error for Gaussian and squared
/// error of ln y for LogNormal.
double metric_deviance(Family family, double y, double location);

/// Mean of Y.
double mean(const DistributionSpec& dist, const ParamVector& params, double offset = 0.0);
double cdf(const DistributionSpec& dist, const ParamVector& params, double y, double offset = 0.0);
/// Generalized inverse of cdf. q must lie strictly inside (0, 1).
double quantile(const DistributionSpec& dist, const ParamVector& params, double q,
                double offset = 0.0);
/// Probability mass at integer k (count families).
double pmf(const DistributionSpec& dist, const ParamVector& params, double k, double offset = 0.0);

struct AuxEstimate {
  double value = 1.0;
  bool at_bound = false;
};

/// Maximum-likelihood estimate of the family's auxiliary parameter (NB2 phi,
/// Gamma shape, Gaussian/LogNormal sigma) with the locations held fixed.
/// `location` holds natural locations (means; log-scale means for LogNormal).
AuxEstimate global_aux_mle(const DistributionSpec& dist, std::span<const double> y,
                           std::span<const double> location);

/// Bounds of the auxiliary search interval.
inline constexpr double kAuxLower = 1e-8;
inline constexpr double kAuxUpper = 1e10;

}  // namespace boostlab
