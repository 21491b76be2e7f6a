#include "hmmsel/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace hmmsel {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::uint64_t RandomStream::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  for (;;) {
    std::uint64_t x = engine_();
    if (x < limit) return x % n;
  }
}

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  for (;;) {
    double u = 2.0 * uniform01() - 1.0;
    double v = 2.0 * uniform01() - 1.0;
    double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      double f = std::sqrt(-2.0 * std::log(s) / s);
      spare_ = v * f;
      has_spare_ = true;
      return u * f;
    }
  }
}

double RandomStream::gamma_ge1(double shape) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    double u = uniform_pos();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double RandomStream::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw std::invalid_argument("gamma: shape and scale must be positive");
  if (shape >= 1.0) return scale * gamma_ge1(shape);
  // Boost a sub-unit shape: X ~ Gamma(a+1), X * U^(1/a) ~ Gamma(a).
  double g = gamma_ge1(shape + 1.0);
  return scale * g * std::pow(uniform_pos(), 1.0 / shape);
}

long RandomStream::poisson(double mean) {
  if (mean < 0.0) throw std::invalid_argument("poisson: mean must be nonnegative");
  if (mean == 0.0) return 0;
  // Sum exponential inter-arrival times; O(mean) but exact for the small
  // means used here.
  double t = exponential();
  long k = 0;
  while (t < mean) {
    t += exponential();
    ++k;
  }
  return k;
}

double RandomStream::von_mises(double location, double concentration) {
  if (concentration < 0.0)
    throw std::invalid_argument("von_mises: concentration must be nonnegative");
  if (concentration < 1e-8) {
    double x = uniform(-kPi, kPi);
    return x <= -kPi ? kPi : x;
  }
  // Best & Fisher (1979) wrapped-Cauchy envelope rejection.
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * concentration * concentration);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * concentration);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  for (;;) {
    double u1 = uniform01();
    double u2 = uniform01();
    double z = std::cos(kPi * u1);
    double f = (1.0 + r * z) / (r + z);
    double c = concentration * (r - f);
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
      double u3 = uniform01();
      double angle = (u3 < 0.5 ? -1.0 : 1.0) * std::acos(f) + location;
      // wrap to (-pi, pi]
      angle = std::remainder(angle, 2.0 * kPi);
      if (angle <= -kPi) angle = kPi;
      return angle;
    }
  }
}

}  // namespace hmmsel
