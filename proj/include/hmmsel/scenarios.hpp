#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmmsel/model.hpp"

namespace hmmsel {

// Configuration of one data-generating scenario. Defaults reproduce the
// reference settings of each scenario; construct via make_scenario_config to
// get the per-scenario sample sizes.
struct ScenarioConfig {
  std::string id = "baseline";  // "baseline", "s1" .. "s10"
  long T = 5000;                // per-track length
  int n_tracks = 1;
  std::uint64_t seed = 1;

  // s1 (outliers)
  double outlier_fraction = 0.005;
  double outlier_lo = 10.0;
  double outlier_hi = 20.0;
  // s3 (diel variation); switch slots per day and the logit-scale waveform
  int diel_period = 96;
  double diel_a = -2.2;
  double diel_b = 1.5;
  int diel_phase = 0;  // slot of peak activity onset
  // s4 (heterogeneity): per-track state-2 mean ~ LogNormal(log_mean, log_sd)
  double hetero_log_mean = 1.3862943611198906;  // ln 4
  double hetero_log_sd = 0.15;
  // s5 (semi-Markov): state-2 dwell law
  double dwell_mean = 3.0;
  bool dwell_truncated = false;
  // s6 (second-order chain)
  double switch_after_pair = 0.25;   // P(switch | two equal states in a row)
  double switch_after_entry = 0.05;  // P(switch | state just entered)
  // s7 (within-state autocorrelation)
  double ar_coeff = 0.95;
  double ar_sd = 0.6;  // stationary sd of the log-mean process
};

// id -> config with that scenario's default sizes (s4: 10 x 500, s9: 1000,
// s10: 2000, otherwise 5000).
ScenarioConfig make_scenario_config(const std::string& id, std::uint64_t seed);

struct ScenarioTruth {
  std::string description;
  int n_true_states = 0;
  std::vector<double> true_means;
  std::vector<double> true_shapes;
  // s1: contaminated slot indices (per track) and the pre-contamination data
  std::vector<std::vector<int>> contaminated_slots;
  std::vector<std::vector<double>> clean_values;
  // s4: the drawn state-2 mean of every track
  std::vector<double> track_state2_means;
};

struct ScenarioOutput {
  ObservationSeries data;
  StateSequence true_states;
  ScenarioTruth truth;
};

// The two-state gamma HMM all scenarios perturb: means (0.5, 4),
// shapes (0.7, 2.5), 0.1 probability of leaving a state, stationary start.
HmmSpec baseline_model();

// The heavy-tailed state-2 replacement density of scenario 2 (frozen
// cubic-B-spline table; also shipped under data/).
SplineDensity scenario2_spline();

ScenarioOutput generate(const ScenarioConfig& config);

// The 3x3 transition matrix equivalent to a two-state HMM whose second state
// emits a two-component mixture with weight alpha on the first component.
Tpm equivalent_three_state_tpm(double gamma11, double gamma22, double alpha);

}  // namespace hmmsel
