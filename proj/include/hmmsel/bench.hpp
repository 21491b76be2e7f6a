#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hmmsel/scenarios.hpp"
#include "hmmsel/select.hpp"

namespace hmmsel {

struct ExperimentPlan {
  ScenarioConfig scenario;          // scenario.seed is the master seed
  int replicates = 100;
  std::vector<int> n_range = {2, 3, 4, 5};
  CriteriaConfig criteria;
  std::vector<EmissionKind> family = {EmissionKind::Gamma};
  int workers = 1;
};

// One (replicate, N) fit with everything needed to rebuild the tables.
struct ReplicateRecord {
  int replicate = 0;
  int n_states = 0;
  bool ok = true;
  std::string error;
  long T = 0;
  int n_params = 0;
  double log_lik = 0.0;
  double complete_data_log_lik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  std::optional<double> icl;
  // canonical (ascending-mean) channel-0 emission parameters
  std::vector<double> means;
  std::vector<double> shapes;
  std::vector<double> zero_masses;  // empty unless the channel is zero-inflated
  int n_starts = 0;
  int n_converged = 0;
  int n_boundary = 0;
};

struct SelectionTable {
  std::vector<int> n_range;
  int replicates = 0;
  std::map<std::string, std::vector<int>> counts;  // criterion -> per-N counts
  std::map<std::string, int> excluded;             // replicates without a winner
  double percentage(const std::string& criterion, int n) const;
};

struct BiasTable {
  struct Entry {
    std::string parameter;
    double true_value;  // NaN when the generating truth has no such state
    double mean;
    double sd;  // NaN when fewer than two estimates
    long count;
  };
  std::map<int, std::vector<Entry>> by_n;  // fitted N -> entries
  std::map<int, long> excluded;            // failed fits per N
};

struct ExperimentResult {
  SelectionTable selection;
  BiasTable bias;
  std::vector<ReplicateRecord> records;
  ScenarioTruth truth;  // from the first replicate
  std::vector<std::string> warnings;
};

// Runs R replicates of: generate the scenario, fit every N in n_range,
// compute the criteria. Deterministic given the plan (master seed =
// scenario.seed); replicates run on up to `workers` threads with per-unit
// derived seeds, so scheduling order cannot change results.
ExperimentResult run_experiment(const ExperimentPlan& plan);

// Re-aggregation from persisted records; replicates with a failed or absent
// row are excluded from the winner counts (reported in `excluded`).
SelectionTable selection_from_records(const std::vector<ReplicateRecord>& records,
                                      const std::vector<int>& n_range);

// Mean/sd of the canonical parameter estimates per fitted N, next to the
// generating truth (states matched by ascending emission mean).
BiasTable bias_summary(const std::vector<ReplicateRecord>& records, const ScenarioTruth& truth);

}  // namespace hmmsel
