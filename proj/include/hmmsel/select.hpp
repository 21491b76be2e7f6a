#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hmmsel/fit.hpp"
#include "hmmsel/model.hpp"

namespace hmmsel {

// Emission family of one observation channel, used to build fitting
// templates across a range of state counts.
enum class EmissionKind { Gamma, ZeroInflatedGamma, VonMises, LogNormal };

EmissionKind emission_kind_from_name(const std::string& name);
std::string emission_kind_name(EmissionKind k);

// N-state template with placeholder parameters; the start sampler supplies
// actual values.
HmmSpec make_template(const std::vector<EmissionKind>& family, int n_states);

struct CriteriaRow {
  int n_states = 0;
  int n_params = 0;
  double log_lik = 0.0;
  double complete_data_log_lik = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  std::optional<double> icl;  // absent when the decoded path is impossible
  bool fit_ok = true;
  std::string note;
};

double aic(double log_lik, int p);
double bic(double log_lik, int p, long T);
double icl(double complete_data_log_lik, int p, long T);

// Criteria row for an already-fitted model (runs Viterbi for the
// complete-data likelihood). T is the criteria sample size of `data`.
CriteriaRow criteria_from_fit(const FitResult& fit_result, const ObservationSeries& data);

struct CriteriaTable {
  std::vector<CriteriaRow> rows;             // one per requested N, ascending
  std::map<std::string, int> winners;        // criterion name -> selected N
  std::vector<std::string> warnings;
  std::vector<FitResult> fits;               // aligned with rows (rows with fit_ok only are meaningful)
};

struct CriteriaConfig {
  FitConfig fit;
  // Warm-start each N > min(n_range) from the previous best model with one
  // state duplicated (exact copy plus a jittered copy). Keeps the fitted
  // log-likelihood monotone in N.
  bool nested_starts = true;
};

// Fits one model per state count and assembles the criteria table plus the
// per-criterion winners (argmin; exact ties go to the smaller N). Rows whose
// fit failed are annotated and skipped for the winner computation; rows with
// undefined ICL are excluded from the ICL argmin with a warning.
CriteriaTable criteria_table(const ObservationSeries& data,
                             const std::vector<EmissionKind>& family,
                             const std::vector<int>& n_range, const CriteriaConfig& config);

// Winners from already-computed rows (same tie/exclusion rules).
std::map<std::string, int> criteria_winners(const std::vector<CriteriaRow>& rows,
                                            std::vector<std::string>* warnings = nullptr);

}  // namespace hmmsel
