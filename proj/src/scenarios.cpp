#include "hmmsel/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hmmsel/util.hpp"

namespace hmmsel {

namespace {

constexpr double kPi = 3.14159265358979323846;

double inv_logit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int draw_from(const std::vector<double>& probs, RandomStream& rng) {
  double u = rng.uniform01();
  double acc = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    acc += probs[j];
    if (u < acc) return static_cast<int>(j);
  }
  return static_cast<int>(probs.size()) - 1;
}

// Geometric dwell on {1,2,...} with P(1) = leave.
long geometric_dwell(double leave, RandomStream& rng) {
  long k = 1;
  while (!rng.bernoulli(leave)) ++k;
  return k;
}

ScenarioTruth baseline_truth(const std::string& description) {
  ScenarioTruth t;
  t.description = description;
  t.n_true_states = 2;
  t.true_means = {0.5, 4.0};
  t.true_shapes = {0.7, 2.5};
  return t;
}

HmmSpec gamma_hmm(const Tpm& tpm, const std::vector<double>& means,
                  const std::vector<double>& shapes) {
  HmmSpec m;
  m.n_states = static_cast<int>(means.size());
  m.tpm = tpm;
  m.init = InitMode::Stationary;
  m.channels.resize(1);
  for (std::size_t s = 0; s < means.size(); ++s)
    m.channels[0].push_back(Gamma(means[s], shapes[s]));
  return m;
}

}  // namespace

HmmSpec baseline_model() {
  return gamma_hmm({{0.9, 0.1}, {0.1, 0.9}}, {0.5, 4.0}, {0.7, 2.5});
}

SplineDensity scenario2_spline() {
  // Frozen table (v1): unit knots on [0, 20]; coefficients give a mode near 3
  // and a 0.99 quantile near 15. Mirrored in data/spline_heavy_tail_v1.txt.
  std::vector<double> knots(21);
  for (int i = 0; i <= 20; ++i) knots[i] = static_cast<double>(i);
  std::vector<double> coeffs = {0.182262, 0.228519, 0.186391, 0.122696, 0.073432, 0.043594,
                                0.027364, 0.018677, 0.013728, 0.010578, 0.008339, 0.006627,
                                0.005268, 0.004177, 0.003298, 0.002594, 0.002032};
  return SplineDensity(std::move(knots), std::move(coeffs));
}

ScenarioConfig make_scenario_config(const std::string& id, std::uint64_t seed) {
  ScenarioConfig c;
  c.id = id;
  c.seed = seed;
  if (id == "s4") {
    c.T = 500;
    c.n_tracks = 10;
  } else if (id == "s9") {
    c.T = 1000;
  } else if (id == "s10") {
    c.T = 2000;
  } else {
    c.T = 5000;
  }
  return c;
}

Tpm equivalent_three_state_tpm(double gamma11, double gamma22, double alpha) {
  auto in01 = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in01(gamma11) || !in01(gamma22) || !in01(alpha))
    throw std::invalid_argument("equivalent_three_state_tpm: arguments must lie in (0,1)");
  return {{gamma11, alpha * (1.0 - gamma11), (1.0 - alpha) * (1.0 - gamma11)},
          {1.0 - gamma22, alpha * gamma22, (1.0 - alpha) * gamma22},
          {1.0 - gamma22, alpha * gamma22, (1.0 - alpha) * gamma22}};
}

namespace {

ScenarioOutput generate_plain_hmm(const HmmSpec& model, const ScenarioConfig& config,
                                  ScenarioTruth truth) {
  RandomStream rng(config.seed);
  std::vector<int> lengths(config.n_tracks, static_cast<int>(config.T));
  auto [series, states] = simulate(model, lengths, rng);
  return {std::move(series), std::move(states), std::move(truth)};
}

ScenarioOutput generate_s1(const ScenarioConfig& config) {
  ScenarioOutput out = generate_plain_hmm(baseline_model(), config,
                                          baseline_truth("outliers added to the baseline"));
  RandomStream rng(derive_seed(config.seed, 1));
  for (std::size_t k = 0; k < out.data.tracks.size(); ++k) {
    ObsTrack& track = out.data.tracks[k];
    out.truth.clean_values.push_back(track.values);
    long n_outliers = static_cast<long>(std::floor(config.outlier_fraction * track.n_slots));
    // exact-count contamination: sample slots without replacement
    std::vector<int> slots(track.n_slots);
    for (int t = 0; t < track.n_slots; ++t) slots[t] = t;
    for (long i = 0; i < n_outliers; ++i) {
      std::size_t j = i + rng.uniform_int(slots.size() - i);
      std::swap(slots[i], slots[j]);
    }
    std::vector<int> hit(slots.begin(), slots.begin() + n_outliers);
    std::sort(hit.begin(), hit.end());
    for (int t : hit) track.at(t, 0) += rng.uniform(config.outlier_lo, config.outlier_hi);
    out.truth.contaminated_slots.push_back(std::move(hit));
  }
  return out;
}

ScenarioOutput generate_s2(const ScenarioConfig& config) {
  HmmSpec model = baseline_model();
  model.channels[0][1] = scenario2_spline();
  ScenarioTruth truth = baseline_truth("state-2 emission replaced by a heavy-tailed spline");
  truth.true_means[1] = mean_of(model.channels[0][1]);
  truth.true_shapes[1] = std::nan("");
  return generate_plain_hmm(model, config, std::move(truth));
}

ScenarioOutput generate_s3(const ScenarioConfig& config) {
  const HmmSpec base = baseline_model();
  RandomStream rng(config.seed);
  const int period = config.diel_period;
  if (period < 2) throw std::invalid_argument("s3: diel_period must be >= 2");
  auto tpm_at = [&](int slot) {
    double phase = 2.0 * kPi * static_cast<double>((slot - config.diel_phase + period) % period) /
                   static_cast<double>(period);
    double g12 = inv_logit(config.diel_a + config.diel_b * std::cos(phase));
    double g21 = inv_logit(config.diel_a + config.diel_b * std::cos(phase + kPi));
    return Tpm{{1.0 - g12, g12}, {g21, 1.0 - g21}};
  };
  ScenarioOutput out;
  out.truth = baseline_truth("time-varying switching probabilities (diel cycle)");
  for (int k = 0; k < config.n_tracks; ++k) {
    ObsTrack track;
    track.n_slots = static_cast<int>(config.T);
    track.n_channels = 1;
    track.values.resize(config.T);
    track.time_labels.resize(config.T);
    std::vector<int> seq(config.T);
    int s = draw_from(stationary_distribution(tpm_at(0)), rng);
    for (long t = 0; t < config.T; ++t) {
      int slot = static_cast<int>(t % period);
      if (t > 0) s = draw_from(tpm_at(slot)[s], rng);
      seq[t] = s + 1;
      track.time_labels[t] = slot;
      track.values[t] = sample(base.channels[0][s], rng);
    }
    out.data.tracks.push_back(std::move(track));
    out.true_states.tracks.push_back(std::move(seq));
  }
  return out;
}

ScenarioOutput generate_s4(const ScenarioConfig& config) {
  RandomStream rng(config.seed);
  ScenarioOutput out;
  out.truth = baseline_truth("track-specific state-2 means (individual heterogeneity)");
  for (int k = 0; k < config.n_tracks; ++k) {
    double mean2 = std::exp(config.hetero_log_mean + config.hetero_log_sd * rng.normal());
    out.truth.track_state2_means.push_back(mean2);
    HmmSpec model = gamma_hmm({{0.9, 0.1}, {0.1, 0.9}}, {0.5, mean2}, {0.7, 2.5});
    auto [series, states] = simulate(model, {static_cast<int>(config.T)}, rng);
    out.data.tracks.push_back(std::move(series.tracks[0]));
    out.true_states.tracks.push_back(std::move(states.tracks[0]));
  }
  return out;
}

ScenarioOutput generate_s5(const ScenarioConfig& config) {
  const HmmSpec base = baseline_model();
  const PoissonDwell dwell2(config.dwell_mean, config.dwell_truncated);
  RandomStream rng(config.seed);
  ScenarioOutput out;
  out.truth = baseline_truth("state-2 dwell times drawn from a Poisson-based law");
  // Start states in proportion to mean dwell time (time-stationary weighting).
  const double mean1 = 1.0 / 0.1;
  const double mean2 = mean_of(Distribution(dwell2));
  for (int k = 0; k < config.n_tracks; ++k) {
    ObsTrack track;
    track.n_slots = static_cast<int>(config.T);
    track.n_channels = 1;
    track.values.resize(config.T);
    std::vector<int> seq(config.T);
    int s = rng.uniform01() < mean1 / (mean1 + mean2) ? 0 : 1;
    long t = 0;
    while (t < config.T) {
      long d = s == 0 ? geometric_dwell(0.1, rng)
                      : static_cast<long>(sample(Distribution(dwell2), rng));
      for (long u = 0; u < d && t < config.T; ++u, ++t) {
        seq[t] = s + 1;
        track.values[t] = sample(base.channels[0][s], rng);
      }
      s = 1 - s;
    }
    out.data.tracks.push_back(std::move(track));
    out.true_states.tracks.push_back(std::move(seq));
  }
  return out;
}

ScenarioOutput generate_s6(const ScenarioConfig& config) {
  const HmmSpec base = baseline_model();
  const double p_pair = config.switch_after_pair;
  const double p_entry = config.switch_after_entry;
  // Expanded first-order chain on pairs (prev, cur) for the stationary start.
  // Pair order: (1,1), (1,2), (2,1), (2,2).
  Tpm expanded = {{1.0 - p_pair, p_pair, 0.0, 0.0},
                  {0.0, 0.0, p_entry, 1.0 - p_entry},
                  {1.0 - p_entry, p_entry, 0.0, 0.0},
                  {0.0, 0.0, p_pair, 1.0 - p_pair}};
  std::vector<double> pair_start = stationary_distribution(expanded);
  RandomStream rng(config.seed);
  ScenarioOutput out;
  out.truth = baseline_truth("second-order hidden state process");
  for (int k = 0; k < config.n_tracks; ++k) {
    ObsTrack track;
    track.n_slots = static_cast<int>(config.T);
    track.n_channels = 1;
    track.values.resize(config.T);
    std::vector<int> seq(config.T);
    int pair = draw_from(pair_start, rng);
    int prev = pair / 2, cur = pair % 2;
    for (long t = 0; t < config.T; ++t) {
      if (t == 1) {
        // (prev, cur) drawn jointly at t=0 already fixes the second state
      } else if (t > 1) {
        double p_switch = (prev == cur) ? p_pair : p_entry;
        int next = rng.bernoulli(p_switch) ? 1 - cur : cur;
        prev = cur;
        cur = next;
      }
      int emit_state = t == 0 ? prev : cur;
      seq[t] = emit_state + 1;
      track.values[t] = sample(base.channels[0][emit_state], rng);
    }
    out.data.tracks.push_back(std::move(track));
    out.true_states.tracks.push_back(std::move(seq));
  }
  return out;
}

ScenarioOutput generate_s7(const ScenarioConfig& config) {
  RandomStream rng(config.seed);
  const double levels[2] = {0.5, 4.0};
  const double shapes[2] = {0.7, 2.5};
  const double rho = config.ar_coeff;
  if (!(rho > -1.0 && rho < 1.0)) throw std::invalid_argument("s7: ar_coeff must be in (-1,1)");
  const double innov_sd = config.ar_sd * std::sqrt(1.0 - rho * rho);
  const Tpm tpm = {{0.9, 0.1}, {0.1, 0.9}};
  ScenarioOutput out;
  out.truth = baseline_truth("state-dependent means follow AR(1) processes");
  for (int k = 0; k < config.n_tracks; ++k) {
    ObsTrack track;
    track.n_slots = static_cast<int>(config.T);
    track.n_channels = 1;
    track.values.resize(config.T);
    std::vector<int> seq(config.T);
    double e[2] = {config.ar_sd * rng.normal(), config.ar_sd * rng.normal()};
    int s = rng.bernoulli(0.5) ? 1 : 0;
    for (long t = 0; t < config.T; ++t) {
      if (t > 0) {
        s = draw_from(tpm[s], rng);
        e[0] = rho * e[0] + innov_sd * rng.normal();
        e[1] = rho * e[1] + innov_sd * rng.normal();
      }
      seq[t] = s + 1;
      double mean_t = levels[s] * std::exp(e[s]);
      track.values[t] = rng.gamma(shapes[s], mean_t / shapes[s]);
    }
    out.data.tracks.push_back(std::move(track));
    out.true_states.tracks.push_back(std::move(seq));
  }
  return out;
}

}  // namespace

ScenarioOutput generate(const ScenarioConfig& config) {
  if (config.T < 2) throw std::invalid_argument("generate: T must be >= 2");
  if (config.n_tracks < 1) throw std::invalid_argument("generate: n_tracks must be >= 1");
  if (!(config.outlier_fraction >= 0.0 && config.outlier_fraction < 1.0))
    throw std::invalid_argument("generate: outlier_fraction must lie in [0,1)");
  if (!(config.outlier_hi > config.outlier_lo))
    throw std::invalid_argument("generate: outlier interval is empty");

  const std::string& id = config.id;
  if (id == "baseline" || id == "s8") {
    return generate_plain_hmm(baseline_model(), config,
                              baseline_truth(id == "s8" ? "benchmark: exactly the baseline model"
                                                        : "baseline model"));
  }
  if (id == "s1") return generate_s1(config);
  if (id == "s2") return generate_s2(config);
  if (id == "s3") return generate_s3(config);
  if (id == "s4") return generate_s4(config);
  if (id == "s5") return generate_s5(config);
  if (id == "s6") return generate_s6(config);
  if (id == "s7") return generate_s7(config);
  if (id == "s9") {
    HmmSpec m = gamma_hmm({{0.9, 0.05, 0.05}, {0.05, 0.9, 0.05}, {0.05, 0.05, 0.9}},
                          {0.5, 1.5, 3.0}, {2.0, 3.0, 4.0});
    ScenarioTruth t;
    t.description = "three well-separated gamma states, short series";
    t.n_true_states = 3;
    t.true_means = {0.5, 1.5, 3.0};
    t.true_shapes = {2.0, 3.0, 4.0};
    return generate_plain_hmm(m, config, std::move(t));
  }
  if (id == "s10") {
    HmmSpec m = gamma_hmm({{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}},
                          {5.5, 3.0, 1.0}, {12.0, 4.0, 1.5});
    ScenarioTruth t;
    t.description = "three overlapping gamma states";
    t.n_true_states = 3;
    t.true_means = {5.5, 3.0, 1.0};
    t.true_shapes = {12.0, 4.0, 1.5};
    return generate_plain_hmm(m, config, std::move(t));
  }
  throw std::invalid_argument("generate: unknown scenario id '" + id + "'");
}

}  // namespace hmmsel
