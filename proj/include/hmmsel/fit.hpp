#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmmsel/model.hpp"

namespace hmmsel {

// Natural-scale boxes that keep the likelihood bounded during optimization.
// Positive parameters are penalized (quadratically, in log space) outside
// their box; starts that end on a box are flagged in the fit record.
struct ParameterBounds {
  double mean_lo = 1e-4;
  double mean_hi_factor = 10.0;  // ceiling = factor * max observed value of the channel
  double shape_lo = 0.05;
  double shape_hi = 50.0;
  double conc_lo = 1e-3;
  double conc_hi = 100.0;
  double tpm_logit_cap = 18.0;  // cap on |log(gamma_ij / gamma_ii)|
};

struct StartSampler {
  double mean_jitter = 0.3;  // multiplicative, uniform in [1-j, 1+j]
  double shape_lo = 0.3;
  double shape_hi = 5.0;
  double diag_lo = 0.7;
  double diag_hi = 0.95;
  double conc_lo = 0.1;
  double conc_hi = 10.0;
};

struct FitConfig {
  int n_starts = 25;
  std::uint64_t seed = 1;
  int max_iterations = 1000;
  double tolerance = 1e-8;  // relative log-likelihood improvement
  ParameterBounds bounds;
  StartSampler sampler;
  int n_threads = 1;
};

struct StartRecord {
  std::uint64_t seed = 0;
  bool converged = false;
  bool boundary = false;  // ended on a parameter box
  double log_lik = 0.0;
  int iterations = 0;
};

struct FitResult {
  HmmSpec best_model;
  double log_lik = 0.0;
  int n_params = 0;
  std::vector<StartRecord> starts;
  long data_size = 0;  // time slots with at least one observed channel
};

// Raised when no start converges; carries the per-start diagnostics.
class FitFailure : public std::runtime_error {
 public:
  FitFailure(const std::string& msg, std::vector<StartRecord> starts)
      : std::runtime_error(msg), starts_(std::move(starts)) {}
  const std::vector<StartRecord>& starts() const { return starts_; }

 private:
  std::vector<StartRecord> starts_;
};

// Unconstrained working parameterization: log for positive parameters,
// logit for the zero mass, and row-wise multinomial logit (diagonal as
// reference) for the transition matrix. Bijective on the interior of the
// natural parameter space.
std::vector<double> to_working(const HmmSpec& model);
HmmSpec from_working(const std::vector<double>& w, const HmmSpec& templ);

// p = N(N-1) transition parameters plus the emission parameters; requires a
// stationary initial distribution (delta is implied by the t.p.m.).
int count_parameters(const HmmSpec& templ);

// Multi-start maximum likelihood. Deterministic given (data, template,
// config.seed); extra_starts are optimized first, with derived seeds that do
// not disturb the sampled starts.
FitResult fit(const ObservationSeries& data, const HmmSpec& templ, const FitConfig& config,
              const std::vector<HmmSpec>& extra_starts = {});

// Relabels states so first-channel emission means are ascending.
HmmSpec canonicalize_states(const HmmSpec& model);

// Expands a model by duplicating one state (incoming probability split
// evenly; outgoing rows copied), leaving the likelihood unchanged. A small
// relative jitter on the copy's emission parameters breaks the symmetry.
HmmSpec duplicate_state(const HmmSpec& model, int state_index, double jitter);

namespace detail {
// -log-likelihood and its gradient in working coordinates; exposed for
// testing against finite differences.
double neg_log_lik_working(const std::vector<double>& w, const HmmSpec& templ,
                           const ObservationSeries& data, std::vector<double>* grad);
}  // namespace detail

}  // namespace hmmsel
