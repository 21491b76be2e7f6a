#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hmmsel/dist.hpp"
#include "hmmsel/scenarios.hpp"
#include "hmmsel/stats.hpp"

using namespace hmmsel;

namespace {
constexpr double kPi = 3.14159265358979323846;

double simpson_mass(const Distribution& d, double lo, double hi) {
  return integrate([&](double x) { return std::exp(log_pdf(d, x)); }, lo, hi, 1e-9);
}
}  // namespace

TEST_CASE("gamma log density: exponential special case and paper shape") {
  // Gamma(mean 1, shape 1) is Exponential(1)
  CHECK(log_pdf(Distribution(Gamma(1.0, 1.0)), 1.0) == doctest::Approx(-1.0).epsilon(1e-12));
  // mean .5 / shape .7 has a strictly decreasing density
  Distribution d = Gamma(0.5, 0.7);
  double prev = log_pdf(d, 0.01);
  for (double x = 0.06; x <= 5.0; x += 0.05) {
    double cur = log_pdf(d, x);
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK(log_pdf(d, -0.5) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("von Mises with zero concentration is the uniform circle") {
  CHECK(log_pdf(Distribution(VonMises(0.0, 0.0)), 1.3) ==
        doctest::Approx(-std::log(2.0 * kPi)).epsilon(1e-12));
}

TEST_CASE("gamma cdf/quantile: exponential median and oracles") {
  Distribution expo = Gamma(1.0, 1.0);
  CHECK(cdf(expo, std::log(2.0)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(quantile(expo, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-10));

  // Monte Carlo oracle for the cdf (independent of the cdf code path)
  Distribution g = Gamma(4.0, 2.5);
  RandomStream rng(20240405);
  long below = 0;
  const long n = 1000000;
  for (long i = 0; i < n; ++i)
    if (sample(g, rng) <= 4.0) ++below;
  double mc = static_cast<double>(below) / n;
  CHECK(std::abs(cdf(g, 4.0) - mc) < 2e-3);

  // bisection oracle for the quantile
  double target = 0.9;
  double lo = 0.0, hi = 100.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (cdf(g, mid) < target ? lo : hi) = mid;
  }
  CHECK(quantile(g, 0.9) == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-8));
}

TEST_CASE("zero-inflated gamma: point mass, total mass, quantile") {
  ZeroInflatedGamma z(0.2, 1.0, 1.0);
  CHECK(cdf(Distribution(z), 0.0) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(cdf_left(Distribution(z), 0.0) == 0.0);
  // total mass: atom + continuous part
  double cont = simpson_mass(Distribution(z), 1e-12, 60.0);
  CHECK(0.2 + cont == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(quantile(Distribution(z), 0.1) == 0.0);
  CHECK(quantile(Distribution(z), 0.6) ==
        doctest::Approx(quantile(Distribution(Gamma(1.0, 1.0)), 0.5)).epsilon(1e-10));
}

TEST_CASE("quantile round-trips through the cdf") {
  std::vector<Distribution> dists = {
      Gamma(0.5, 0.7),  Gamma(4.0, 2.5),     LogNormal(std::log(4.0), 0.15),
      Uniform(10, 20),  scenario2_spline(),  VonMises(0.5, 2.0),
      GammaMixture({0.6, 0.4}, {Gamma(1.0, 2.0), Gamma(6.0, 3.0)}),
  };
  for (const auto& d : dists) {
    for (double p = 0.01; p < 0.995; p += 0.07) {
      double q = quantile(d, p);
      CHECK(cdf(d, q) == doctest::Approx(p).epsilon(1e-8));
    }
  }
  CHECK_THROWS(quantile(dists[0], 0.0));
  CHECK_THROWS(quantile(dists[0], 1.0));
}

TEST_CASE("sampling stays on support and obeys the law of large numbers") {
  RandomStream rng(7);
  Distribution u = Uniform(10, 20);
  for (int i = 0; i < 2000; ++i) {
    double x = sample(u, rng);
    CHECK(x >= 10.0);
    CHECK(x <= 20.0);
  }
  Distribution g = Gamma(4.0, 2.5);
  double acc = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) acc += sample(g, rng);
  CHECK(std::abs(acc / n - 4.0) < 0.1);  // 4 sigma/sqrt(n) ~ 0.032

  Distribution vm = VonMises(2.9, 5.0);
  for (int i = 0; i < 2000; ++i) {
    double x = sample(vm, rng);
    CHECK(x > -kPi);
    CHECK(x <= kPi);
  }
  Distribution pd = PoissonDwell(3.0);
  double dsum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    double k = sample(pd, rng);
    CHECK(k >= 1.0);
    dsum += k;
  }
  CHECK(std::abs(dsum / 100000 - 3.0) < 0.05);
}

TEST_CASE("continuous densities integrate to one") {
  CHECK(simpson_mass(Gamma(0.5, 0.7), 1e-12, 80.0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(simpson_mass(Gamma(4.0, 2.5), 1e-12, 120.0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(simpson_mass(VonMises(1.0, 3.0), -kPi, kPi) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(simpson_mass(LogNormal(1.4, 0.15), 1e-6, 60.0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(simpson_mass(Uniform(10, 20), 10, 20) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(simpson_mass(scenario2_spline(), 0.0, 20.0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(simpson_mass(GammaMixture({0.3, 0.7}, {Gamma(1, 1), Gamma(5, 3)}), 1e-12, 150.0) ==
        doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("mean/shape and shape/rate parameterizations are inverse") {
  Gamma g(3.7, 1.9);
  Gamma back = gamma_from_shape_rate(g.shape, g.rate());
  CHECK(back.mean == doctest::Approx(g.mean).epsilon(1e-14));
  CHECK(back.shape == g.shape);
  // and the other way round
  Gamma h = gamma_from_shape_rate(2.5, 0.625);
  CHECK(h.rate() == doctest::Approx(0.625).epsilon(1e-14));
}

TEST_CASE("Kolmogorov-Smirnov distance of 1e5 samples stays below 0.01") {
  std::vector<Distribution> dists = {
      Gamma(0.5, 0.7),
      Gamma(4.0, 2.5),
      VonMises(-1.2, 2.5),
      ZeroInflatedGamma(0.15, 2.0, 1.2),
      GammaMixture({0.5, 0.5}, {Gamma(1.0, 2.0), Gamma(7.0, 4.0)}),
      scenario2_spline(),
      LogNormal(0.3, 0.8),
      Uniform(-2, 5),
  };
  const int n = 100000;
  std::uint64_t seed = 1000;
  for (const auto& d : dists) {
    RandomStream rng(seed++);
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = sample(d, rng);
    if (is_continuous(d)) {
      double ks = ks_statistic(xs, [&](double x) { return cdf(d, x); });
      CHECK(ks < 0.01);
    } else {
      // discrete/mixed: compare cdf jumps at observed support points
      std::sort(xs.begin(), xs.end());
      double worst = 0.0;
      for (double q : {0.0, 1.0, 2.0, 3.0, 5.0, 8.0}) {
        double emp = static_cast<double>(std::upper_bound(xs.begin(), xs.end(), q) - xs.begin()) / n;
        worst = std::max(worst, std::abs(emp - cdf(d, q)));
      }
      CHECK(worst < 0.01);
    }
  }
}

TEST_CASE("poisson dwell law: support from one, both variants") {
  Distribution shifted = PoissonDwell(3.0);
  CHECK(log_pdf(shifted, 0.0) == -std::numeric_limits<double>::infinity());
  CHECK(log_pdf(shifted, 1.5) == -std::numeric_limits<double>::infinity());
  // shifted: P(k) = Poisson(k-1; 2)
  CHECK(std::exp(log_pdf(shifted, 1.0)) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(mean_of(shifted) == doctest::Approx(3.0));
  double mass = 0.0;
  for (int k = 1; k < 60; ++k) mass += std::exp(log_pdf(shifted, k));
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));

  Distribution trunc = PoissonDwell(3.0, true);
  CHECK(log_pdf(trunc, 0.0) == -std::numeric_limits<double>::infinity());
  double tmass = 0.0;
  for (int k = 1; k < 80; ++k) tmass += std::exp(log_pdf(trunc, k));
  CHECK(tmass == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mean_of(trunc) == doctest::Approx(3.0 / (1.0 - std::exp(-3.0))).epsilon(1e-12));
  CHECK(quantile(shifted, 0.5) >= 1.0);
}

TEST_CASE("spline density: shape, continuity, and table round-trip") {
  SplineDensity s = scenario2_spline();
  // nonnegative and continuous on a fine grid
  double prev = s.density(0.0);
  double mode_x = 0.0, mode_v = 0.0;
  for (double x = 0.0; x <= 20.0; x += 0.002) {
    double v = s.density(x);
    CHECK(v >= 0.0);
    CHECK(std::abs(v - prev) < 0.01);  // no jumps at knots
    if (v > mode_v) {
      mode_v = v;
      mode_x = x;
    }
    prev = v;
  }
  CHECK(s.density(-1.0) == 0.0);
  CHECK(s.density(25.0) == 0.0);
  CHECK(mode_x == doctest::Approx(3.0).epsilon(0.15));
  CHECK(quantile(Distribution(s), 0.99) >= 12.0);

  // the shipped table matches the built-in coefficients
  SplineDensity from_file =
      SplineDensity::load_table(std::string(HMMSEL_DATA_DIR) + "/spline_heavy_tail_v1.txt");
  REQUIRE(from_file.knots.size() == s.knots.size());
  for (std::size_t i = 0; i < s.knots.size(); ++i)
    CHECK(from_file.knots[i] == s.knots[i]);
  REQUIRE(from_file.coefficients.size() == s.coefficients.size());
  for (std::size_t i = 0; i < s.coefficients.size(); ++i)
    CHECK(from_file.coefficients[i] == s.coefficients[i]);
}

TEST_CASE("invalid parameters are rejected at construction") {
  CHECK_THROWS(Gamma(-1.0, 1.0));
  CHECK_THROWS(Gamma(1.0, 0.0));
  CHECK_THROWS(ZeroInflatedGamma(1.0, 1.0, 1.0));
  CHECK_THROWS(VonMises(0.0, -0.5));
  CHECK_THROWS(GammaMixture({0.5, 0.6}, {Gamma(1, 1), Gamma(2, 2)}));
  CHECK_THROWS(PoissonDwell(0.9));
  CHECK_THROWS(Uniform(2.0, 2.0));
  CHECK_THROWS(LogNormal(0.0, -1.0));
  CHECK_THROWS(SplineDensity({0, 1, 2, 3}, {}));
  CHECK_THROWS(SplineDensity({0, 1, 1, 3, 4, 5}, {1.0, 1.0}));
}
