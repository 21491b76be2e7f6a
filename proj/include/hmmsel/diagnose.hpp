#pragma once

#include <utility>
#include <vector>

#include "hmmsel/model.hpp"
#include "hmmsel/rng.hpp"

namespace hmmsel {

// One-step-ahead pseudo-residuals on the standard-normal scale; NaN where
// the observation is missing. Under a correctly specified model the
// non-missing residuals are approximately i.i.d. N(0,1).
struct ResidualSeries {
  std::vector<std::vector<double>> tracks;
  int n_clamped = 0;  // forecast-cdf values clipped away from {0, 1}
};

// z_t = Phi^-1(F(x_t | x_{1..t-1})). Observations sitting on an atom of the
// forecast distribution (the zero mass of a zero-inflated channel) get a
// randomized residual: u ~ Uniform[F(x-), F(x)], z = Phi^-1(u), which is the
// seeded source of randomness.
ResidualSeries pseudo_residuals(const HmmSpec& model, const ObservationSeries& data, int channel,
                                RandomStream& rng);

// Pooled sample autocorrelation of the residuals, lags 0..max_lag; lag 0 is
// normalized to 1 and missing pairs are skipped pairwise.
std::vector<double> acf(const ResidualSeries& z, int max_lag);

// (theoretical normal quantile, sorted residual) pairs at plotting positions
// (i - 0.5) / n.
std::vector<std::pair<double, double>> qq_points(const ResidualSeries& z);

}  // namespace hmmsel
