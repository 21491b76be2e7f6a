#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "hmmsel/dist.hpp"
#include "hmmsel/rng.hpp"

namespace hmmsel {

using Tpm = std::vector<std::vector<double>>;

enum class InitMode { Stationary, Fixed };

// A hidden Markov model: an N-state chain with row-stochastic transition
// matrix, an initial-distribution rule, and one emission distribution per
// state per observation channel. Channels are conditionally independent
// given the state.
struct HmmSpec {
  int n_states = 1;
  Tpm tpm;
  InitMode init = InitMode::Stationary;
  std::vector<double> init_probs;  // used when init == Fixed
  std::vector<std::vector<Distribution>> channels;  // [channel][state]

  int n_channels() const { return static_cast<int>(channels.size()); }
  void validate() const;  // throws std::invalid_argument
  std::vector<double> initial_distribution() const;
};

// One or more tracks of possibly multivariate observations on a common
// channel layout. NaN marks a missing value; a slot may be partially
// observed. Optional per-slot integer labels carry generation-side
// covariates (e.g. time-of-day index).
struct ObsTrack {
  int n_slots = 0;
  int n_channels = 1;
  std::vector<double> values;      // slot-major, size n_slots * n_channels
  std::vector<int> time_labels;    // empty, or one label per slot

  double at(int t, int c) const { return values[static_cast<std::size_t>(t) * n_channels + c]; }
  double& at(int t, int c) { return values[static_cast<std::size_t>(t) * n_channels + c]; }
  bool missing(int t, int c) const { return std::isnan(at(t, c)); }

  static ObsTrack univariate(std::vector<double> xs);
};

struct ObservationSeries {
  std::vector<ObsTrack> tracks;

  int n_channels() const { return tracks.empty() ? 0 : tracks.front().n_channels; }
  // Number of time slots with at least one observed channel, summed over
  // tracks; this is the T used by sample-size-dependent criteria.
  long n_observed_slots() const;
  long n_observed_values() const;
  void validate() const;

  static ObservationSeries univariate(std::vector<double> xs);
};

// Per-track state labels in {1..N}.
struct StateSequence {
  std::vector<std::vector<int>> tracks;
};

// Unique stationary vector of an irreducible row-stochastic matrix.
// Throws std::invalid_argument when the matrix is not stochastic, and
// std::runtime_error when the chain is reducible or the solve degenerates.
std::vector<double> stationary_distribution(const Tpm& tpm);

// Scaled-forward log-likelihood, summed over tracks. Missing channels drop
// only their own emission factor; fully missing slots contribute transition
// structure only.
double log_likelihood(const HmmSpec& model, const ObservationSeries& data);

// Jointly most probable state sequence per track, computed in log space.
// Ties resolve toward the lower state index, from the end of the track
// backwards.
StateSequence viterbi(const HmmSpec& model, const ObservationSeries& data);

// log of the joint density of observations and the given state sequence:
// log delta_{s1} + sum log gamma_{s_{t-1} s_t} + sum log p(x | s). Returns
// -inf when the sequence crosses a zero-probability transition.
double complete_data_log_likelihood(const HmmSpec& model, const ObservationSeries& data,
                                    const StateSequence& states);

std::pair<ObservationSeries, StateSequence> simulate(const HmmSpec& model,
                                                     const std::vector<int>& lengths,
                                                     RandomStream& rng);

// One-step-ahead forecast cdf Pr(X_{t,channel} <= x | x_{1..t-1}) for the
// observation at (track, t, channel); t is 0-based. For t == 0 the state
// weights are the initial distribution.
double one_step_cdf(const HmmSpec& model, const ObservationSeries& data, int track, int t,
                    int channel);

// Left limit of the forecast cdf at the same point (differs only when the
// channel's emission has an atom there).
double one_step_cdf_left(const HmmSpec& model, const ObservationSeries& data, int track, int t,
                         int channel);

namespace detail {
// Forward-predictive state weights P(S_t = j | x_{1..t-1}); shared by the
// one-step cdf variants.
std::vector<double> forecast_weights(const HmmSpec& model, const ObsTrack& track, int t);
// All slots at once (row-major T x N); one forward pass instead of T.
std::vector<double> forecast_weights_matrix(const HmmSpec& model, const ObsTrack& track);
// Dense N x N linear solve (partial pivoting); a is row-major.
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b, int n);
}  // namespace detail

}  // namespace hmmsel
