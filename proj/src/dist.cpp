#include "hmmsel/dist.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "hmmsel/stats.hpp"
#include "hmmsel/util.hpp"

namespace hmmsel {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + " must be positive and finite");
  }
  return v;
}

double gamma_log_pdf(double mean, double shape, double x) {
  if (!(x > 0.0)) return kNegInf;
  const double rate = shape / mean;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double gamma_cdf(double mean, double shape, double x) {
  if (!(x > 0.0)) return 0.0;
  return boost::math::gamma_p(shape, (shape / mean) * x);
}

double gamma_quantile(double mean, double shape, double p) {
  return boost::math::gamma_p_inv(shape, p) * (mean / shape);
}

double von_mises_log_pdf(const VonMises& d, double x) {
  return d.concentration * std::cos(x - d.location) -
         std::log(2.0 * kPi * boost::math::cyl_bessel_i(0.0, d.concentration));
}

// Generic quantile: Newton with bisection safeguard on a continuous cdf.
template <typename Cdf, typename Pdf>
double invert_cdf(double p, double lo, double hi, const Cdf& cdf_fn, const Pdf& pdf_fn) {
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    double f = cdf_fn(x) - p;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    double dens = pdf_fn(x);
    double step = dens > 0.0 ? f / dens : 0.0;
    double next = x - step;
    if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) < 1e-14 * (1.0 + std::abs(x))) return next;
    x = next;
  }
  return x;
}

// Cubic (order 4) B-spline basis function on five knots.
double cubic_bspline_basis(const double* t, double x) {
  double b[4];
  for (int i = 0; i < 4; ++i) b[i] = (x >= t[i] && x < t[i + 1]) ? 1.0 : 0.0;
  for (int k = 2; k <= 4; ++k) {
    for (int i = 0; i + k <= 4; ++i) {
      double v = 0.0;
      if (t[i + k - 1] > t[i]) v += (x - t[i]) / (t[i + k - 1] - t[i]) * b[i];
      if (t[i + k] > t[i + 1]) v += (t[i + k] - x) / (t[i + k] - t[i + 1]) * b[i + 1];
      b[i] = v;
    }
  }
  return b[0];
}

}  // namespace

Gamma::Gamma(double mean_, double shape_)
    : mean(require_positive(mean_, "Gamma mean")), shape(require_positive(shape_, "Gamma shape")) {}

Gamma gamma_from_shape_rate(double shape, double rate) {
  require_positive(rate, "Gamma rate");
  return Gamma(shape / rate, shape);
}

VonMises::VonMises(double location_, double concentration_)
    : location(location_), concentration(concentration_) {
  if (!(location > -kPi - 1e-12) || !(location <= kPi + 1e-12) || !std::isfinite(location))
    throw std::invalid_argument("VonMises location must lie in (-pi, pi]");
  if (!(concentration >= 0.0) || !std::isfinite(concentration))
    throw std::invalid_argument("VonMises concentration must be nonnegative");
}

ZeroInflatedGamma::ZeroInflatedGamma(double zero_mass_, double mean_, double shape_)
    : zero_mass(zero_mass_), mean(require_positive(mean_, "ZeroInflatedGamma mean")),
      shape(require_positive(shape_, "ZeroInflatedGamma shape")) {
  if (!(zero_mass >= 0.0 && zero_mass < 1.0))
    throw std::invalid_argument("ZeroInflatedGamma zero_mass must lie in [0, 1)");
}

GammaMixture::GammaMixture(std::vector<double> weights_, std::vector<Gamma> components_)
    : weights(std::move(weights_)), components(std::move(components_)) {
  if (weights.empty() || weights.size() != components.size())
    throw std::invalid_argument("GammaMixture: weights/components size mismatch");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("GammaMixture: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("GammaMixture: weights must sum to 1 within 1e-12");
}

SplineDensity::SplineDensity(std::vector<double> knots_, std::vector<double> coefficients_)
    : knots(std::move(knots_)), coefficients(std::move(coefficients_)) {
  if (knots.size() < 5) throw std::invalid_argument("SplineDensity: need at least 5 knots");
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i] > knots[i - 1]))
      throw std::invalid_argument("SplineDensity: knots must be strictly increasing");
  if (coefficients.size() != knots.size() - 4)
    throw std::invalid_argument("SplineDensity: need exactly #knots - 4 coefficients");
  double cmax = 0.0;
  for (double c : coefficients) {
    if (!(c >= 0.0)) throw std::invalid_argument("SplineDensity: negative coefficient");
    cmax = std::max(cmax, c);
  }
  if (cmax == 0.0) throw std::invalid_argument("SplineDensity: all coefficients zero");

  // The raw spline is a cubic polynomial on each span, so two-point
  // Gauss-Legendre integrates it exactly.
  span_cdf_.assign(knots.size(), 0.0);
  const double g = 0.5 / std::sqrt(3.0);
  for (std::size_t s = 0; s + 1 < knots.size(); ++s) {
    double a = knots[s], b = knots[s + 1];
    double m = 0.5 * (a + b), h = b - a;
    double v = 0.5 * h * (raw_value(m - g * h) + raw_value(m + g * h));
    span_cdf_[s + 1] = span_cdf_[s] + v;
  }
  normalizer_ = span_cdf_.back();
  if (!(normalizer_ > 0.0)) throw std::invalid_argument("SplineDensity: zero mass");
}

double SplineDensity::raw_value(double x) const {
  if (!(x >= knots.front()) || !(x < knots.back())) return 0.0;
  auto it = std::upper_bound(knots.begin(), knots.end(), x);
  long s = (it - knots.begin()) - 1;
  long n = static_cast<long>(coefficients.size());
  double v = 0.0;
  for (long i = std::max<long>(0, s - 3); i <= std::min(n - 1, s); ++i) {
    if (coefficients[i] != 0.0) v += coefficients[i] * cubic_bspline_basis(&knots[i], x);
  }
  return v;
}

double SplineDensity::density(double x) const { return raw_value(x) / normalizer_; }

double SplineDensity::raw_integral_to(double x) const {
  if (x <= knots.front()) return 0.0;
  if (x >= knots.back()) return normalizer_;
  auto it = std::upper_bound(knots.begin(), knots.end(), x);
  long s = (it - knots.begin()) - 1;
  double a = knots[s];
  double m = 0.5 * (a + x), h = x - a;
  const double g = 0.5 / std::sqrt(3.0);
  return span_cdf_[s] + 0.5 * h * (raw_value(m - g * h) + raw_value(m + g * h));
}

SplineDensity SplineDensity::load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("SplineDensity: cannot open " + path);
  std::vector<double> knots, coeffs;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    double k, c;
    if (row >> k >> c) {
      knots.push_back(k);
      coeffs.push_back(c);
    }
  }
  if (knots.size() < 5) throw std::runtime_error("SplineDensity: table too short in " + path);
  for (std::size_t i = knots.size() - 4; i < knots.size(); ++i) {
    if (coeffs[i] != 0.0)
      throw std::runtime_error("SplineDensity: trailing padding coefficients must be zero in " +
                               path);
  }
  coeffs.resize(knots.size() - 4);
  return SplineDensity(std::move(knots), std::move(coeffs));
}

void SplineDensity::save_table(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("SplineDensity: cannot write " + path);
  out << "# cubic B-spline density table v1\n";
  out << "# rows: knot coefficient; trailing 4 coefficients are padding zeros\n";
  for (std::size_t i = 0; i < knots.size(); ++i) {
    double c = i < coefficients.size() ? coefficients[i] : 0.0;
    out << format_double(knots[i]) << " " << format_double(c) << "\n";
  }
}

LogNormal::LogNormal(double log_mean_, double log_sd_)
    : log_mean(log_mean_), log_sd(require_positive(log_sd_, "LogNormal log_sd")) {
  if (!std::isfinite(log_mean)) throw std::invalid_argument("LogNormal log_mean must be finite");
}

PoissonDwell::PoissonDwell(double mean_, bool truncated_) : mean(mean_), truncated(truncated_) {
  if (!(mean > 1.0) || !std::isfinite(mean))
    throw std::invalid_argument("PoissonDwell mean must exceed 1");
}

Uniform::Uniform(double lo_, double hi_) : lo(lo_), hi(hi_) {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
    throw std::invalid_argument("Uniform requires lo < hi");
}

double cdf_impl(const SplineDensity& d, double x) {
  return d.raw_integral_to(x) / d.normalizer_;
}

double quantile_impl(const SplineDensity& d, double p) {
  double target = p * d.normalizer_;
  auto it = std::upper_bound(d.span_cdf_.begin(), d.span_cdf_.end(), target);
  long s = std::min<long>((it - d.span_cdf_.begin()) - 1,
                          static_cast<long>(d.knots.size()) - 2);
  s = std::max<long>(s, 0);
  return invert_cdf(
      p, d.knots[s], d.knots[s + 1], [&](double x) { return cdf_impl(d, x); },
      [&](double x) { return d.density(x); });
}

double mean_impl(const SplineDensity& d) {
  // x * cubic is quartic; three-point Gauss-Legendre is exact per span.
  const double g = 0.5 * std::sqrt(3.0 / 5.0);
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < d.knots.size(); ++i) {
    double a = d.knots[i], b = d.knots[i + 1];
    double m = 0.5 * (a + b), h = b - a;
    auto f = [&](double x) { return x * d.raw_value(x); };
    s += 0.5 * h * (5.0 / 9.0 * f(m - g * h) + 8.0 / 9.0 * f(m) + 5.0 / 9.0 * f(m + g * h));
  }
  return s / d.normalizer_;
}

namespace {

double poisson_log_pmf(double lambda, long k) {
  return -lambda + k * std::log(lambda) - std::lgamma(k + 1.0);
}

double dwell_log_pmf(const PoissonDwell& d, long k) {
  if (k < 1) return kNegInf;
  if (d.truncated) {
    return poisson_log_pmf(d.mean, k) - std::log1p(-std::exp(-d.mean));
  }
  return poisson_log_pmf(d.mean - 1.0, k - 1);
}

struct LogPdfVisitor {
  double x;
  double operator()(const Gamma& d) const { return gamma_log_pdf(d.mean, d.shape, x); }
  double operator()(const VonMises& d) const { return von_mises_log_pdf(d, x); }
  double operator()(const ZeroInflatedGamma& d) const {
    if (x == 0.0) return d.zero_mass > 0.0 ? std::log(d.zero_mass) : kNegInf;
    if (!(x > 0.0)) return kNegInf;
    return std::log1p(-d.zero_mass) + gamma_log_pdf(d.mean, d.shape, x);
  }
  double operator()(const GammaMixture& d) const {
    double best = kNegInf;
    std::vector<double> terms(d.components.size(), kNegInf);
    for (std::size_t i = 0; i < d.components.size(); ++i) {
      if (d.weights[i] > 0.0) {
        terms[i] = std::log(d.weights[i]) +
                   gamma_log_pdf(d.components[i].mean, d.components[i].shape, x);
        best = std::max(best, terms[i]);
      }
    }
    if (best == kNegInf) return kNegInf;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - best);
    return best + std::log(s);
  }
  double operator()(const SplineDensity& d) const {
    double v = d.density(x);
    return v > 0.0 ? std::log(v) : kNegInf;
  }
  double operator()(const LogNormal& d) const {
    if (!(x > 0.0)) return kNegInf;
    double z = (std::log(x) - d.log_mean) / d.log_sd;
    return -std::log(x * d.log_sd) - 0.5 * std::log(2.0 * kPi) - 0.5 * z * z;
  }
  double operator()(const PoissonDwell& d) const {
    double r = std::round(x);
    if (std::abs(x - r) > 1e-9) return kNegInf;
    return dwell_log_pmf(d, static_cast<long>(r));
  }
  double operator()(const Uniform& d) const {
    return (x >= d.lo && x <= d.hi) ? -std::log(d.hi - d.lo) : kNegInf;
  }
};

double von_mises_cdf(const VonMises& d, double x) {
  if (x <= -kPi) return 0.0;
  if (x >= kPi) return 1.0;
  return integrate([&](double t) { return std::exp(von_mises_log_pdf(d, t)); }, -kPi, x, 1e-12);
}

struct CdfVisitor {
  double x;
  double operator()(const Gamma& d) const { return gamma_cdf(d.mean, d.shape, x); }
  double operator()(const VonMises& d) const { return von_mises_cdf(d, x); }
  double operator()(const ZeroInflatedGamma& d) const {
    if (x < 0.0) return 0.0;
    return d.zero_mass + (1.0 - d.zero_mass) * gamma_cdf(d.mean, d.shape, x);
  }
  double operator()(const GammaMixture& d) const {
    double s = 0.0;
    for (std::size_t i = 0; i < d.components.size(); ++i)
      s += d.weights[i] * gamma_cdf(d.components[i].mean, d.components[i].shape, x);
    return s;
  }
  double operator()(const SplineDensity& d) const { return cdf_impl(d, x); }
  double operator()(const LogNormal& d) const {
    if (!(x > 0.0)) return 0.0;
    return normal_cdf((std::log(x) - d.log_mean) / d.log_sd);
  }
  double operator()(const PoissonDwell& d) const {
    if (x < 1.0) return 0.0;
    long k = static_cast<long>(std::floor(x + 1e-9));
    double s = 0.0;
    for (long j = 1; j <= k; ++j) s += std::exp(dwell_log_pmf(d, j));
    return std::min(s, 1.0);
  }
  double operator()(const Uniform& d) const {
    if (x <= d.lo) return 0.0;
    if (x >= d.hi) return 1.0;
    return (x - d.lo) / (d.hi - d.lo);
  }
};

struct QuantileVisitor {
  double p;
  double operator()(const Gamma& d) const { return gamma_quantile(d.mean, d.shape, p); }
  double operator()(const VonMises& d) const {
    return invert_cdf(
        p, -kPi, kPi, [&](double x) { return von_mises_cdf(d, x); },
        [&](double x) { return std::exp(von_mises_log_pdf(d, x)); });
  }
  double operator()(const ZeroInflatedGamma& d) const {
    if (p <= d.zero_mass) return 0.0;
    return gamma_quantile(d.mean, d.shape, (p - d.zero_mass) / (1.0 - d.zero_mass));
  }
  double operator()(const GammaMixture& d) const {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& c : d.components) {
      double q = gamma_quantile(c.mean, c.shape, p);
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
    if (lo >= hi) return lo;
    return invert_cdf(
        p, lo, hi,
        [&](double x) {
          double s = 0.0;
          for (std::size_t i = 0; i < d.components.size(); ++i)
            s += d.weights[i] * gamma_cdf(d.components[i].mean, d.components[i].shape, x);
          return s;
        },
        [&](double x) { return std::exp(LogPdfVisitor{x}(d)); });
  }
  double operator()(const SplineDensity& d) const { return quantile_impl(d, p); }
  double operator()(const LogNormal& d) const {
    return std::exp(d.log_mean + d.log_sd * normal_quantile(p));
  }
  double operator()(const PoissonDwell& d) const {
    double s = 0.0;
    for (long k = 1; k < 100000; ++k) {
      s += std::exp(dwell_log_pmf(d, k));
      if (s >= p) return static_cast<double>(k);
    }
    return 100000.0;
  }
  double operator()(const Uniform& d) const { return d.lo + p * (d.hi - d.lo); }
};

struct SampleVisitor {
  RandomStream& rng;
  double operator()(const Gamma& d) const { return rng.gamma(d.shape, d.mean / d.shape); }
  double operator()(const VonMises& d) const {
    return rng.von_mises(d.location, d.concentration);
  }
  double operator()(const ZeroInflatedGamma& d) const {
    if (rng.bernoulli(d.zero_mass)) return 0.0;
    return rng.gamma(d.shape, d.mean / d.shape);
  }
  double operator()(const GammaMixture& d) const {
    double u = rng.uniform01();
    double acc = 0.0;
    std::size_t pick = d.components.size() - 1;
    for (std::size_t i = 0; i < d.weights.size(); ++i) {
      acc += d.weights[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    const Gamma& c = d.components[pick];
    return rng.gamma(c.shape, c.mean / c.shape);
  }
  double operator()(const SplineDensity& d) const {
    double u;
    do {
      u = rng.uniform01();
    } while (u <= 0.0);
    return quantile_impl(d, u);
  }
  double operator()(const LogNormal& d) const {
    return std::exp(d.log_mean + d.log_sd * rng.normal());
  }
  double operator()(const PoissonDwell& d) const {
    if (d.truncated) {
      for (;;) {
        long k = rng.poisson(d.mean);
        if (k >= 1) return static_cast<double>(k);
      }
    }
    return static_cast<double>(1 + rng.poisson(d.mean - 1.0));
  }
  double operator()(const Uniform& d) const { return rng.uniform(d.lo, d.hi); }
};

struct MeanVisitor {
  double operator()(const Gamma& d) const { return d.mean; }
  double operator()(const VonMises& d) const { return d.location; }
  double operator()(const ZeroInflatedGamma& d) const { return (1.0 - d.zero_mass) * d.mean; }
  double operator()(const GammaMixture& d) const {
    double s = 0.0;
    for (std::size_t i = 0; i < d.components.size(); ++i)
      s += d.weights[i] * d.components[i].mean;
    return s;
  }
  double operator()(const SplineDensity& d) const { return mean_impl(d); }
  double operator()(const LogNormal& d) const {
    return std::exp(d.log_mean + 0.5 * d.log_sd * d.log_sd);
  }
  double operator()(const PoissonDwell& d) const {
    if (d.truncated) return d.mean / (1.0 - std::exp(-d.mean));
    return d.mean;
  }
  double operator()(const Uniform& d) const { return 0.5 * (d.lo + d.hi); }
};

}  // namespace

double log_pdf(const Distribution& d, double x) { return std::visit(LogPdfVisitor{x}, d); }

double cdf(const Distribution& d, double x) { return std::visit(CdfVisitor{x}, d); }

double cdf_left(const Distribution& d, double x) {
  if (const auto* z = std::get_if<ZeroInflatedGamma>(&d)) {
    if (x <= 0.0) return 0.0;
    return z->zero_mass + (1.0 - z->zero_mass) * gamma_cdf(z->mean, z->shape, x);
  }
  if (std::get_if<PoissonDwell>(&d) != nullptr) {
    return cdf(d, x - 0.5);  // steps only at integers
  }
  return cdf(d, x);
}

double quantile(const Distribution& d, double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile: p must be in (0,1)");
  return std::visit(QuantileVisitor{p}, d);
}

double sample(const Distribution& d, RandomStream& rng) {
  return std::visit(SampleVisitor{rng}, d);
}

double mean_of(const Distribution& d) { return std::visit(MeanVisitor{}, d); }

int n_free_params(const Distribution& d) {
  struct V {
    int operator()(const Gamma&) const { return 2; }
    int operator()(const VonMises&) const { return 2; }
    int operator()(const ZeroInflatedGamma&) const { return 3; }
    int operator()(const GammaMixture& m) const {
      return static_cast<int>(m.components.size()) * 3 - 1;
    }
    int operator()(const SplineDensity&) const { return 0; }
    int operator()(const LogNormal&) const { return 2; }
    int operator()(const PoissonDwell&) const { return 1; }
    int operator()(const Uniform&) const { return 2; }
  };
  return std::visit(V{}, d);
}

bool is_continuous(const Distribution& d) {
  return std::get_if<ZeroInflatedGamma>(&d) == nullptr &&
         std::get_if<PoissonDwell>(&d) == nullptr;
}

std::string family_name(const Distribution& d) {
  struct V {
    std::string operator()(const Gamma&) const { return "gamma"; }
    std::string operator()(const VonMises&) const { return "von_mises"; }
    std::string operator()(const ZeroInflatedGamma&) const { return "zero_inflated_gamma"; }
    std::string operator()(const GammaMixture&) const { return "gamma_mixture"; }
    std::string operator()(const SplineDensity&) const { return "spline_density"; }
    std::string operator()(const LogNormal&) const { return "log_normal"; }
    std::string operator()(const PoissonDwell&) const { return "poisson_dwell"; }
    std::string operator()(const Uniform&) const { return "uniform"; }
  };
  return std::visit(V{}, d);
}

}  // namespace hmmsel
