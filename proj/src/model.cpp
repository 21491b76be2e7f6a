#include "hmmsel/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hmmsel {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_tpm(const Tpm& tpm, int n) {
  if (static_cast<int>(tpm.size()) != n)
    throw std::invalid_argument("tpm: wrong number of rows");
  for (const auto& row : tpm) {
    if (static_cast<int>(row.size()) != n)
      throw std::invalid_argument("tpm: wrong number of columns");
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("tpm: entries must be nonnegative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-10)
      throw std::invalid_argument("tpm: rows must sum to 1 within 1e-10");
  }
}

bool irreducible(const Tpm& tpm) {
  int n = static_cast<int>(tpm.size());
  // Reachability closure over the positive entries.
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) reach[i][j] = (i == j) || tpm[i][j] > 0.0;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (!reach[i][j]) return false;
  return true;
}

// Fills log emission probabilities b[t*N + j] = sum over present channels of
// log p(x_{ct} | state j). Missing channels are skipped; a fully missing slot
// yields 0 (emission factor 1).
void log_emissions(const HmmSpec& model, const ObsTrack& track, std::vector<double>& logb) {
  const int n = model.n_states;
  const int nc = track.n_channels;
  logb.assign(static_cast<std::size_t>(track.n_slots) * n, 0.0);
  for (int t = 0; t < track.n_slots; ++t) {
    for (int c = 0; c < nc; ++c) {
      double x = track.at(t, c);
      if (std::isnan(x)) continue;
      for (int j = 0; j < n; ++j)
        logb[static_cast<std::size_t>(t) * n + j] += log_pdf(model.channels[c][j], x);
    }
  }
}

}  // namespace

ObsTrack ObsTrack::univariate(std::vector<double> xs) {
  ObsTrack t;
  t.n_slots = static_cast<int>(xs.size());
  t.n_channels = 1;
  t.values = std::move(xs);
  return t;
}

ObservationSeries ObservationSeries::univariate(std::vector<double> xs) {
  ObservationSeries s;
  s.tracks.push_back(ObsTrack::univariate(std::move(xs)));
  return s;
}

long ObservationSeries::n_observed_slots() const {
  long total = 0;
  for (const auto& tr : tracks) {
    for (int t = 0; t < tr.n_slots; ++t) {
      for (int c = 0; c < tr.n_channels; ++c) {
        if (!tr.missing(t, c)) {
          ++total;
          break;
        }
      }
    }
  }
  return total;
}

long ObservationSeries::n_observed_values() const {
  long total = 0;
  for (const auto& tr : tracks)
    for (int t = 0; t < tr.n_slots; ++t)
      for (int c = 0; c < tr.n_channels; ++c)
        if (!tr.missing(t, c)) ++total;
  return total;
}

void ObservationSeries::validate() const {
  if (tracks.empty()) throw std::invalid_argument("ObservationSeries: no tracks");
  int nc = tracks.front().n_channels;
  for (const auto& tr : tracks) {
    if (tr.n_channels != nc)
      throw std::invalid_argument("ObservationSeries: channel count differs between tracks");
    if (tr.n_slots < 2) throw std::invalid_argument("ObservationSeries: tracks need T >= 2");
    if (static_cast<int>(tr.values.size()) != tr.n_slots * tr.n_channels)
      throw std::invalid_argument("ObservationSeries: value buffer size mismatch");
    if (!tr.time_labels.empty() && static_cast<int>(tr.time_labels.size()) != tr.n_slots)
      throw std::invalid_argument("ObservationSeries: time label size mismatch");
  }
}

void HmmSpec::validate() const {
  if (n_states < 1) throw std::invalid_argument("HmmSpec: n_states must be >= 1");
  check_tpm(tpm, n_states);
  if (channels.empty()) throw std::invalid_argument("HmmSpec: needs at least one channel");
  for (const auto& ch : channels)
    if (static_cast<int>(ch.size()) != n_states)
      throw std::invalid_argument("HmmSpec: each channel needs one distribution per state");
  if (init == InitMode::Fixed) {
    if (static_cast<int>(init_probs.size()) != n_states)
      throw std::invalid_argument("HmmSpec: init_probs size mismatch");
    double sum = 0.0;
    for (double v : init_probs) {
      if (!(v >= 0.0)) throw std::invalid_argument("HmmSpec: negative init probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-10)
      throw std::invalid_argument("HmmSpec: init_probs must sum to 1");
  } else {
    stationary_distribution(tpm);  // throws when no unique stationary vector exists
  }
}

std::vector<double> HmmSpec::initial_distribution() const {
  if (init == InitMode::Fixed) return init_probs;
  return stationary_distribution(tpm);
}

std::vector<double> detail::solve_linear(std::vector<double> a, std::vector<double> b, int n) {
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    if (std::abs(a[pivot * n + col]) < 1e-12)
      throw std::runtime_error("solve_linear: singular system");
    if (pivot != col) {
      for (int c = 0; c < n; ++c) std::swap(a[pivot * n + c], a[col * n + c]);
      std::swap(b[pivot], b[col]);
    }
    for (int r = col + 1; r < n; ++r) {
      double f = a[r * n + col] / a[col * n + col];
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < n; ++c) s -= a[r * n + c] * x[c];
    x[r] = s / a[r * n + r];
  }
  return x;
}

std::vector<double> stationary_distribution(const Tpm& tpm) {
  const int n = static_cast<int>(tpm.size());
  check_tpm(tpm, n);
  if (n == 1) return {1.0};
  if (!irreducible(tpm))
    throw std::runtime_error("stationary_distribution: chain is reducible");
  // delta (I - Gamma + U) = 1 with U the all-ones matrix; solve the
  // transposed system.
  std::vector<double> m(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      m[j * n + i] = (i == j ? 1.0 : 0.0) - tpm[i][j] + 1.0;  // transpose of I - Gamma + U
  std::vector<double> rhs(n, 1.0);
  std::vector<double> delta = detail::solve_linear(std::move(m), std::move(rhs), n);
  double sum = 0.0;
  for (double v : delta) {
    if (!(v > -1e-12) || !std::isfinite(v))
      throw std::runtime_error("stationary_distribution: degenerate solution");
    sum += v;
  }
  for (double& v : delta) v = std::max(v, 0.0) / sum;
  return delta;
}

double log_likelihood(const HmmSpec& model, const ObservationSeries& data) {
  model.validate();
  data.validate();
  if (data.n_channels() != model.n_channels())
    throw std::invalid_argument("log_likelihood: channel count mismatch");
  const int n = model.n_states;
  const std::vector<double> delta = model.initial_distribution();
  double total = 0.0;
  std::vector<double> logb, alpha(n), next(n);
  for (const auto& track : data.tracks) {
    log_emissions(model, track, logb);
    double loglik = 0.0;
    for (int t = 0; t < track.n_slots; ++t) {
      const double* lb = &logb[static_cast<std::size_t>(t) * n];
      double m = *std::max_element(lb, lb + n);
      if (!std::isfinite(m)) m = 0.0;  // all emissions impossible; scale factor cancels
      for (int j = 0; j < n; ++j) {
        double prior;
        if (t == 0) {
          prior = delta[j];
        } else {
          prior = 0.0;
          for (int i = 0; i < n; ++i) prior += alpha[i] * model.tpm[i][j];
        }
        next[j] = prior * std::exp(lb[j] - m);
      }
      double c = 0.0;
      for (int j = 0; j < n; ++j) c += next[j];
      if (!(c > 0.0)) return kNegInf;
      for (int j = 0; j < n; ++j) alpha[j] = next[j] / c;
      loglik += std::log(c) + m;
    }
    total += loglik;
  }
  return total;
}

StateSequence viterbi(const HmmSpec& model, const ObservationSeries& data) {
  model.validate();
  data.validate();
  if (data.n_channels() != model.n_channels())
    throw std::invalid_argument("viterbi: channel count mismatch");
  const int n = model.n_states;
  const std::vector<double> delta = model.initial_distribution();
  std::vector<double> log_tpm(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      log_tpm[i * n + j] = model.tpm[i][j] > 0.0 ? std::log(model.tpm[i][j]) : kNegInf;

  StateSequence out;
  std::vector<double> logb;
  for (const auto& track : data.tracks) {
    log_emissions(model, track, logb);
    const int T = track.n_slots;
    std::vector<double> score(n), next_score(n);
    std::vector<int> back(static_cast<std::size_t>(T) * n, 0);
    for (int j = 0; j < n; ++j)
      score[j] = (delta[j] > 0.0 ? std::log(delta[j]) : kNegInf) + logb[j];
    for (int t = 1; t < T; ++t) {
      const double* lb = &logb[static_cast<std::size_t>(t) * n];
      for (int j = 0; j < n; ++j) {
        double best = kNegInf;
        int arg = 0;
        for (int i = 0; i < n; ++i) {
          double v = score[i] + log_tpm[i * n + j];
          if (v > best) {  // strict: ties keep the lower predecessor index
            best = v;
            arg = i;
          }
        }
        next_score[j] = best + lb[j];
        back[static_cast<std::size_t>(t) * n + j] = arg;
      }
      score.swap(next_score);
    }
    int last = 0;
    for (int j = 1; j < n; ++j)
      if (score[j] > score[last]) last = j;
    std::vector<int> states(T);
    states[T - 1] = last;
    for (int t = T - 1; t > 0; --t)
      states[t - 1] = back[static_cast<std::size_t>(t) * n + states[t]];
    for (int& s : states) s += 1;  // report 1-based labels
    out.tracks.push_back(std::move(states));
  }
  return out;
}

double complete_data_log_likelihood(const HmmSpec& model, const ObservationSeries& data,
                                    const StateSequence& states) {
  model.validate();
  data.validate();
  if (states.tracks.size() != data.tracks.size())
    throw std::invalid_argument("complete_data_log_likelihood: track count mismatch");
  const std::vector<double> delta = model.initial_distribution();
  double total = 0.0;
  for (std::size_t k = 0; k < data.tracks.size(); ++k) {
    const auto& track = data.tracks[k];
    const auto& seq = states.tracks[k];
    if (static_cast<int>(seq.size()) != track.n_slots)
      throw std::invalid_argument("complete_data_log_likelihood: state sequence length mismatch");
    for (int t = 0; t < track.n_slots; ++t) {
      int s = seq[t] - 1;
      if (s < 0 || s >= model.n_states)
        throw std::invalid_argument("complete_data_log_likelihood: state label out of range");
      if (t == 0) {
        total += delta[s] > 0.0 ? std::log(delta[s]) : kNegInf;
      } else {
        double g = model.tpm[seq[t - 1] - 1][s];
        total += g > 0.0 ? std::log(g) : kNegInf;
      }
      for (int c = 0; c < track.n_channels; ++c)
        if (!track.missing(t, c)) total += log_pdf(model.channels[c][s], track.at(t, c));
    }
  }
  return total;
}

std::pair<ObservationSeries, StateSequence> simulate(const HmmSpec& model,
                                                     const std::vector<int>& lengths,
                                                     RandomStream& rng) {
  model.validate();
  const int n = model.n_states;
  const std::vector<double> delta = model.initial_distribution();
  auto draw_state = [&](const std::vector<double>& probs) {
    double u = rng.uniform01();
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      acc += probs[j];
      if (u < acc) return j;
    }
    return n - 1;
  };
  ObservationSeries series;
  StateSequence states;
  for (int T : lengths) {
    if (T < 2) throw std::invalid_argument("simulate: track length must be >= 2");
    ObsTrack track;
    track.n_slots = T;
    track.n_channels = model.n_channels();
    track.values.resize(static_cast<std::size_t>(T) * track.n_channels);
    std::vector<int> seq(T);
    int s = draw_state(delta);
    for (int t = 0; t < T; ++t) {
      if (t > 0) s = draw_state(model.tpm[s]);
      seq[t] = s + 1;
      for (int c = 0; c < track.n_channels; ++c)
        track.at(t, c) = sample(model.channels[c][s], rng);
    }
    series.tracks.push_back(std::move(track));
    states.tracks.push_back(std::move(seq));
  }
  return {std::move(series), std::move(states)};
}

std::vector<double> detail::forecast_weights_matrix(const HmmSpec& model,
                                                    const ObsTrack& track) {
  const int n = model.n_states;
  const int T = track.n_slots;
  std::vector<double> out(static_cast<std::size_t>(T) * n, 0.0);
  std::vector<double> logb;
  log_emissions(model, track, logb);
  std::vector<double> alpha = model.initial_distribution(), next(n);
  for (int t = 0; t < T; ++t) {
    double* w = &out[static_cast<std::size_t>(t) * n];
    if (t == 0) {
      for (int j = 0; j < n; ++j) w[j] = alpha[j];  // alpha holds delta here
    } else {
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) w[j] += alpha[i] * model.tpm[i][j];
    }
    const double* lb = &logb[static_cast<std::size_t>(t) * n];
    double m = *std::max_element(lb, lb + n);
    if (!std::isfinite(m)) m = 0.0;
    double c = 0.0;
    for (int j = 0; j < n; ++j) {
      next[j] = w[j] * std::exp(lb[j] - m);
      c += next[j];
    }
    if (!(c > 0.0)) throw std::runtime_error("forecast_weights: zero-probability history");
    for (int j = 0; j < n; ++j) alpha[j] = next[j] / c;
  }
  return out;
}

std::vector<double> detail::forecast_weights(const HmmSpec& model, const ObsTrack& track,
                                             int t) {
  const int n = model.n_states;
  if (t == 0) return model.initial_distribution();
  ObsTrack prefix = track;
  prefix.n_slots = t + 1;
  prefix.values.assign(track.values.begin(),
                       track.values.begin() + static_cast<std::size_t>(t + 1) * track.n_channels);
  if (!track.time_labels.empty())
    prefix.time_labels.assign(track.time_labels.begin(), track.time_labels.begin() + t + 1);
  std::vector<double> all = forecast_weights_matrix(model, prefix);
  return std::vector<double>(all.begin() + static_cast<std::size_t>(t) * n,
                             all.begin() + static_cast<std::size_t>(t + 1) * n);
}

namespace {

double one_step_mix(const HmmSpec& model, const ObservationSeries& data, int track, int t,
                    int channel, bool left_limit) {
  model.validate();
  data.validate();
  if (track < 0 || track >= static_cast<int>(data.tracks.size()))
    throw std::invalid_argument("one_step_cdf: track index out of range");
  const ObsTrack& tr = data.tracks[track];
  if (t < 0 || t >= tr.n_slots) throw std::invalid_argument("one_step_cdf: slot out of range");
  if (channel < 0 || channel >= tr.n_channels)
    throw std::invalid_argument("one_step_cdf: channel out of range");
  if (tr.missing(t, channel))
    throw std::invalid_argument("one_step_cdf: target observation is missing");
  double x = tr.at(t, channel);
  std::vector<double> w = detail::forecast_weights(model, tr, t);
  double v = 0.0;
  for (int j = 0; j < model.n_states; ++j) {
    const Distribution& d = model.channels[channel][j];
    v += w[j] * (left_limit ? cdf_left(d, x) : cdf(d, x));
  }
  return v;
}

}  // namespace

double one_step_cdf(const HmmSpec& model, const ObservationSeries& data, int track, int t,
                    int channel) {
  return one_step_mix(model, data, track, t, channel, false);
}

double one_step_cdf_left(const HmmSpec& model, const ObservationSeries& data, int track, int t,
                         int channel) {
  return one_step_mix(model, data, track, t, channel, true);
}

}  // namespace hmmsel
