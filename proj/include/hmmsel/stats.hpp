#pragma once

#include <functional>
#include <vector>

namespace hmmsel {

double normal_cdf(double x);
double normal_quantile(double p);  // p in (0,1)

// Two-sided Kolmogorov-Smirnov statistic of a sample against a continuous
// cdf. The sample need not be sorted.
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);

// Asymptotic two-sided KS critical value at the given level.
double ks_critical_value(double alpha, std::size_t n);

double mean_of(const std::vector<double>& v);
double sample_sd(const std::vector<double>& v);
double pearson_correlation(const std::vector<double>& x, const std::vector<double>& y);

// Adaptive Simpson quadrature.
double integrate(const std::function<double(double)>& f, double lo, double hi,
                 double tol = 1e-10);

}  // namespace hmmsel
