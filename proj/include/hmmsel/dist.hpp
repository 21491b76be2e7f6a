#pragma once

#include <string>
#include <variant>
#include <vector>

#include "hmmsel/rng.hpp"

namespace hmmsel {

// Gamma in mean/shape parameterization: rate = shape / mean.
struct Gamma {
  double mean;
  double shape;
  Gamma(double mean, double shape);
  double rate() const { return shape / mean; }
  double scale() const { return mean / shape; }
};

Gamma gamma_from_shape_rate(double shape, double rate);

// Circular density on (-pi, pi].
struct VonMises {
  double location;       // radians in (-pi, pi]
  double concentration;  // kappa >= 0
  VonMises(double location, double concentration);
};

// Point mass at zero mixed with a gamma on (0, inf).
struct ZeroInflatedGamma {
  double zero_mass;
  double mean;
  double shape;
  ZeroInflatedGamma(double zero_mass, double mean, double shape);
  Gamma gamma_part() const { return Gamma(mean, shape); }
};

struct GammaMixture {
  std::vector<double> weights;  // sums to 1 within 1e-12
  std::vector<Gamma> components;
  GammaMixture(std::vector<double> weights, std::vector<Gamma> components);
};

// Normalized density built from a cubic B-spline: sum_i c_i B_{i,4}(x) on
// strictly increasing knots, zero outside [knots.front(), knots.back()].
// There are knots.size() - 4 basis functions; the density is continuous and
// vanishes at both ends of the knot range.
struct SplineDensity {
  std::vector<double> knots;
  std::vector<double> coefficients;  // size knots.size() - 4, nonnegative
  SplineDensity(std::vector<double> knots, std::vector<double> coefficients);

  double density(double x) const;  // normalized
  double lower() const { return knots.front(); }
  double upper() const { return knots.back(); }

  // Plain-text table: one "knot coefficient" pair per row; the trailing four
  // coefficient entries are padding and must be zero (see data/README.md).
  static SplineDensity load_table(const std::string& path);
  void save_table(const std::string& path) const;

 private:
  double normalizer_ = 0.0;
  std::vector<double> span_cdf_;  // cumulative raw integral up to each knot
  double raw_value(double x) const;
  double raw_integral_to(double x) const;
  friend double cdf_impl(const SplineDensity&, double);
  friend double quantile_impl(const SplineDensity&, double);
  friend double mean_impl(const SplineDensity&);
};

struct LogNormal {
  double log_mean;  // mu of log(X)
  double log_sd;    // sigma of log(X)
  LogNormal(double log_mean, double log_sd);
};

// Dwell-time law on {1, 2, ...}: 1 + Poisson(mean - 1) by default, or a
// Poisson(mean) conditioned on being >= 1 when truncated is set.
struct PoissonDwell {
  double mean;  // > 1
  bool truncated = false;
  explicit PoissonDwell(double mean, bool truncated = false);
};

struct Uniform {
  double lo;
  double hi;
  Uniform(double lo, double hi);
};

using Distribution = std::variant<Gamma, VonMises, ZeroInflatedGamma, GammaMixture,
                                  SplineDensity, LogNormal, PoissonDwell, Uniform>;

// Log density (or log mass for the discrete/point-mass parts); -inf off
// support. ZeroInflatedGamma returns log(zero_mass) at exactly x == 0.
double log_pdf(const Distribution& d, double x);

// P(X <= x). For ZeroInflatedGamma the point mass at zero is included, so
// cdf(0) == zero_mass. PoissonDwell is handled by summation.
double cdf(const Distribution& d, double x);

// Left limit P(X < x); differs from cdf only at atoms.
double cdf_left(const Distribution& d, double x);

// Inverse cdf for p in (0, 1).
double quantile(const Distribution& d, double p);

double sample(const Distribution& d, RandomStream& rng);

double mean_of(const Distribution& d);

// Free parameters contributed when this distribution is fitted.
int n_free_params(const Distribution& d);

// True for distributions with an atom or integer support.
bool is_continuous(const Distribution& d);

std::string family_name(const Distribution& d);

}  // namespace hmmsel
