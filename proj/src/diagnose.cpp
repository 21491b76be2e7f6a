#include "hmmsel/diagnose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hmmsel/stats.hpp"

namespace hmmsel {

ResidualSeries pseudo_residuals(const HmmSpec& model, const ObservationSeries& data, int channel,
                                RandomStream& rng) {
  model.validate();
  data.validate();
  if (channel < 0 || channel >= model.n_channels())
    throw std::invalid_argument("pseudo_residuals: channel out of range");
  constexpr double kClamp = 1e-12;
  ResidualSeries out;
  for (std::size_t k = 0; k < data.tracks.size(); ++k) {
    const ObsTrack& track = data.tracks[k];
    const std::vector<double> weights = detail::forecast_weights_matrix(model, track);
    const int n = model.n_states;
    std::vector<double> z(track.n_slots, std::numeric_limits<double>::quiet_NaN());
    for (int t = 0; t < track.n_slots; ++t) {
      if (track.missing(t, channel)) continue;
      const double* w = &weights[static_cast<std::size_t>(t) * n];
      double x = track.at(t, channel);
      double u_hi = 0.0, u_lo = 0.0;
      for (int j = 0; j < n; ++j) {
        const Distribution& d = model.channels[channel][j];
        u_hi += w[j] * cdf(d, x);
        u_lo += w[j] * cdf_left(d, x);
      }
      double u;
      if (u_hi - u_lo > 1e-14) {
        u = u_lo + (u_hi - u_lo) * rng.uniform01();  // randomized residual at an atom
      } else {
        u = u_hi;
      }
      if (u < kClamp) {
        u = kClamp;
        ++out.n_clamped;
      } else if (u > 1.0 - kClamp) {
        u = 1.0 - kClamp;
        ++out.n_clamped;
      }
      z[t] = normal_quantile(u);
    }
    out.tracks.push_back(std::move(z));
  }
  return out;
}

std::vector<double> acf(const ResidualSeries& z, int max_lag) {
  long n = 0;
  double sum = 0.0;
  int min_len = std::numeric_limits<int>::max();
  for (const auto& track : z.tracks) {
    min_len = std::min(min_len, static_cast<int>(track.size()));
    for (double v : track)
      if (!std::isnan(v)) {
        sum += v;
        ++n;
      }
  }
  if (n == 0) throw std::invalid_argument("acf: all residuals missing");
  if (max_lag < 0 || max_lag >= min_len)
    throw std::invalid_argument("acf: max_lag must be below the shortest track length");
  const double mean = sum / static_cast<double>(n);

  std::vector<double> out(max_lag + 1, 0.0);
  double c0 = 0.0;
  for (const auto& track : z.tracks)
    for (double v : track)
      if (!std::isnan(v)) c0 += (v - mean) * (v - mean);
  if (c0 <= 0.0) throw std::invalid_argument("acf: zero variance");
  out[0] = 1.0;
  const double c0_per_obs = c0 / static_cast<double>(n);
  for (int lag = 1; lag <= max_lag; ++lag) {
    double ck = 0.0;
    long pairs = 0;
    for (const auto& track : z.tracks) {
      int T = static_cast<int>(track.size());
      for (int t = 0; t + lag < T; ++t) {
        if (std::isnan(track[t]) || std::isnan(track[t + lag])) continue;
        ck += (track[t] - mean) * (track[t + lag] - mean);
        ++pairs;
      }
    }
    out[lag] = pairs > 0 ? (ck / static_cast<double>(pairs)) / c0_per_obs : 0.0;
  }
  return out;
}

std::vector<std::pair<double, double>> qq_points(const ResidualSeries& z) {
  std::vector<double> values;
  for (const auto& track : z.tracks)
    for (double v : track)
      if (!std::isnan(v)) values.push_back(v);
  if (values.size() < 2) throw std::invalid_argument("qq_points: need at least 2 residuals");
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(values.size());
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out.emplace_back(normal_quantile((static_cast<double>(i) + 0.5) / n), values[i]);
  return out;
}

}  // namespace hmmsel
