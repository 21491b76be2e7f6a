#include "hmmsel/stats.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hmmsel {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  return std::sqrt(2.0) * boost::math::erf_inv(2.0 * p - 1.0);
}

double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

double ks_critical_value(double alpha, std::size_t n) {
  // Inverse of the Kolmogorov distribution tail K(x) = 2 sum (-1)^{k-1} exp(-2 k^2 x^2),
  // solved by bisection, scaled by sqrt(n).
  auto tail = [](double x) {
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
      double term = 2.0 * std::exp(-2.0 * k * k * x * x);
      s += (k % 2 == 1) ? term : -term;
      if (term < 1e-16) break;
    }
    return s;
  };
  double lo = 0.2, hi = 3.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (tail(mid) > alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi) / std::sqrt(static_cast<double>(n));
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean_of: empty");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) throw std::invalid_argument("sample_sd: need at least 2 values");
  double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("pearson_correlation: size mismatch");
  double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

namespace {

double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive(const std::function<double(double)>& f, double a, double b, double fa,
                double fm, double fb, double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = simpson(a, m, fa, flm, fm);
  double right = simpson(m, b, fm, frm, fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double lo, double hi, double tol) {
  if (!(hi > lo)) return 0.0;
  // Split into a few panels first so narrow features are not missed.
  const int panels = 8;
  double total = 0.0;
  double h = (hi - lo) / panels;
  for (int i = 0; i < panels; ++i) {
    double a = lo + i * h, b = a + h;
    double m = 0.5 * (a + b);
    double fa = f(a), fm = f(m), fb = f(b);
    total += adaptive(f, a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol / panels, 40);
  }
  return total;
}

}  // namespace hmmsel
