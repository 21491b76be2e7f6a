// Test-only oracles: brute-force enumeration over all state paths, kept
// independent of the library's forward/Viterbi implementations.
#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "hmmsel/model.hpp"

namespace hmmsel::testing {

inline double path_log_prob(const HmmSpec& m, const ObsTrack& tr,
                            const std::vector<int>& path0 /* 0-based */) {
  auto delta = m.initial_distribution();
  double logp = 0.0;
  for (int t = 0; t < tr.n_slots; ++t) {
    int s = path0[t];
    double step = t == 0 ? delta[s] : m.tpm[path0[t - 1]][s];
    logp += step > 0.0 ? std::log(step) : -std::numeric_limits<double>::infinity();
    for (int c = 0; c < tr.n_channels; ++c)
      if (!tr.missing(t, c)) logp += log_pdf(m.channels[c][s], tr.at(t, c));
  }
  return logp;
}

// log sum over all N^T paths of the joint density.
inline double enum_log_likelihood(const HmmSpec& m, const ObsTrack& tr) {
  const int n = m.n_states, T = tr.n_slots;
  long paths = 1;
  for (int t = 0; t < T; ++t) paths *= n;
  long double total = 0.0L;
  std::vector<int> path(T);
  for (long p = 0; p < paths; ++p) {
    long rem = p;
    for (int t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rem % n);
      rem /= n;
    }
    double lp = path_log_prob(m, tr, path);
    if (std::isfinite(lp)) total += expl(static_cast<long double>(lp));
  }
  return static_cast<double>(logl(total));
}

inline double enum_log_likelihood(const HmmSpec& m, const ObservationSeries& data) {
  double s = 0.0;
  for (const auto& tr : data.tracks) s += enum_log_likelihood(m, tr);
  return s;
}

// Argmax path under the library's tie rule: among score-tied paths the one
// whose states are smallest when compared from the end of the track backwards.
inline std::vector<int> enum_viterbi(const HmmSpec& m, const ObsTrack& tr) {
  const int n = m.n_states, T = tr.n_slots;
  long paths = 1;
  for (int t = 0; t < T; ++t) paths *= n;
  std::vector<int> best;
  double best_lp = -std::numeric_limits<double>::infinity();
  std::vector<int> path(T);
  auto reverse_less = [&](const std::vector<int>& a, const std::vector<int>& b) {
    for (int t = T - 1; t >= 0; --t) {
      if (a[t] != b[t]) return a[t] < b[t];
    }
    return false;
  };
  for (long p = 0; p < paths; ++p) {
    long rem = p;
    for (int t = 0; t < T; ++t) {
      path[t] = static_cast<int>(rem % n);
      rem /= n;
    }
    double lp = path_log_prob(m, tr, path);
    if (lp > best_lp || (lp == best_lp && (best.empty() || reverse_less(path, best)))) {
      best_lp = lp;
      best = path;
    }
  }
  for (int& s : best) s += 1;
  return best;
}

// Pr(X_{t,channel} <= x_t | x_{1..t-1}) by enumerating state paths of length
// t + 1 (0-based t).
inline double enum_one_step_cdf(const HmmSpec& m, const ObsTrack& tr, int t, int channel) {
  const int n = m.n_states;
  auto delta = m.initial_distribution();
  long paths = 1;
  for (int u = 0; u <= t; ++u) paths *= n;
  long double numer = 0.0L, denom = 0.0L;
  std::vector<int> path(t + 1);
  const double x = tr.at(t, channel);
  for (long p = 0; p < paths; ++p) {
    long rem = p;
    for (int u = 0; u <= t; ++u) {
      path[u] = static_cast<int>(rem % n);
      rem /= n;
    }
    long double prob = 1.0L;
    for (int u = 0; u <= t; ++u) {
      prob *= u == 0 ? delta[path[u]] : m.tpm[path[u - 1]][path[u]];
      if (u < t) {
        for (int c = 0; c < tr.n_channels; ++c)
          if (!tr.missing(u, c))
            prob *= expl(static_cast<long double>(log_pdf(m.channels[c][path[u]], tr.at(u, c))));
      }
    }
    denom += prob;
    numer += prob * static_cast<long double>(cdf(m.channels[channel][path[t]], x));
  }
  return static_cast<double>(numer / denom);
}

}  // namespace hmmsel::testing
