#include "hmmsel/select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "hmmsel/util.hpp"

namespace hmmsel {

EmissionKind emission_kind_from_name(const std::string& name) {
  if (name == "gamma") return EmissionKind::Gamma;
  if (name == "zero_inflated_gamma") return EmissionKind::ZeroInflatedGamma;
  if (name == "von_mises") return EmissionKind::VonMises;
  if (name == "log_normal") return EmissionKind::LogNormal;
  throw std::invalid_argument("unknown emission family: " + name);
}

std::string emission_kind_name(EmissionKind k) {
  switch (k) {
    case EmissionKind::Gamma: return "gamma";
    case EmissionKind::ZeroInflatedGamma: return "zero_inflated_gamma";
    case EmissionKind::VonMises: return "von_mises";
    case EmissionKind::LogNormal: return "log_normal";
  }
  return "?";
}

HmmSpec make_template(const std::vector<EmissionKind>& family, int n_states) {
  if (family.empty()) throw std::invalid_argument("make_template: empty family");
  if (n_states < 1) throw std::invalid_argument("make_template: n_states must be >= 1");
  HmmSpec templ;
  templ.n_states = n_states;
  templ.init = InitMode::Stationary;
  templ.tpm.assign(n_states, std::vector<double>(n_states, 0.0));
  for (int i = 0; i < n_states; ++i)
    for (int j = 0; j < n_states; ++j)
      templ.tpm[i][j] = i == j ? (n_states == 1 ? 1.0 : 0.9)
                               : 0.1 / static_cast<double>(n_states - 1);
  templ.channels.resize(family.size());
  for (std::size_t c = 0; c < family.size(); ++c) {
    for (int s = 0; s < n_states; ++s) {
      double level = static_cast<double>(s + 1);
      switch (family[c]) {
        case EmissionKind::Gamma:
          templ.channels[c].push_back(Gamma(level, 1.0));
          break;
        case EmissionKind::ZeroInflatedGamma:
          templ.channels[c].push_back(ZeroInflatedGamma(0.1, level, 1.0));
          break;
        case EmissionKind::VonMises:
          templ.channels[c].push_back(VonMises(0.0, 0.5 * level));
          break;
        case EmissionKind::LogNormal:
          templ.channels[c].push_back(LogNormal(std::log(level), 1.0));
          break;
      }
    }
  }
  return templ;
}

double aic(double log_lik, int p) {
  if (p < 0) throw std::invalid_argument("aic: p must be nonnegative");
  return -2.0 * log_lik + 2.0 * static_cast<double>(p);
}

double bic(double log_lik, int p, long T) {
  if (p < 0 || T < 1) throw std::invalid_argument("bic: require p >= 0 and T >= 1");
  return -2.0 * log_lik + static_cast<double>(p) * std::log(static_cast<double>(T));
}

double icl(double complete_data_log_lik, int p, long T) {
  if (p < 0 || T < 1) throw std::invalid_argument("icl: require p >= 0 and T >= 1");
  return -2.0 * complete_data_log_lik + static_cast<double>(p) * std::log(static_cast<double>(T));
}

CriteriaRow criteria_from_fit(const FitResult& fr, const ObservationSeries& data) {
  CriteriaRow row;
  row.n_states = fr.best_model.n_states;
  row.n_params = fr.n_params;
  row.log_lik = fr.log_lik;
  const long T = data.n_observed_slots();
  StateSequence decoded = viterbi(fr.best_model, data);
  row.complete_data_log_lik = complete_data_log_likelihood(fr.best_model, data, decoded);
  row.aic = aic(row.log_lik, row.n_params);
  row.bic = bic(row.log_lik, row.n_params, T);
  if (std::isfinite(row.complete_data_log_lik)) {
    row.icl = icl(row.complete_data_log_lik, row.n_params, T);
  } else {
    row.icl.reset();
    row.note = "icl undefined: decoded path crosses a zero-probability transition";
  }
  return row;
}

std::map<std::string, int> criteria_winners(const std::vector<CriteriaRow>& rows,
                                            std::vector<std::string>* warnings) {
  std::map<std::string, int> winners;
  auto argmin = [&](auto value_of, const char* name) -> void {
    int best_n = 0;
    double best_v = std::numeric_limits<double>::infinity();
    for (const auto& row : rows) {
      if (!row.fit_ok) continue;
      auto v = value_of(row);
      if (!v.has_value()) {
        if (warnings != nullptr)
          warnings->push_back(std::string(name) + ": N=" + std::to_string(row.n_states) +
                              " excluded (undefined)");
        continue;
      }
      // strict <: exact ties resolve to the smaller N (rows are ascending)
      if (*v < best_v) {
        best_v = *v;
        best_n = row.n_states;
      }
    }
    if (best_n > 0) winners[name] = best_n;
  };
  argmin([](const CriteriaRow& r) { return std::optional<double>(r.aic); }, "aic");
  argmin([](const CriteriaRow& r) { return std::optional<double>(r.bic); }, "bic");
  argmin([](const CriteriaRow& r) { return r.icl; }, "icl");
  return winners;
}

CriteriaTable criteria_table(const ObservationSeries& data,
                             const std::vector<EmissionKind>& family,
                             const std::vector<int>& n_range, const CriteriaConfig& config) {
  if (n_range.empty()) throw std::invalid_argument("criteria_table: empty n_range");
  std::vector<int> ns = n_range;
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());

  // Tails of the first channel, for warm starts aimed at spike states.
  double tail_hi = 0.0, tail_lo = 0.0, tail_lo2 = 0.0;
  {
    std::vector<double> positive;
    for (const auto& tr : data.tracks)
      for (int t = 0; t < tr.n_slots; ++t)
        if (!tr.missing(t, 0) && tr.at(t, 0) > 0.0) positive.push_back(tr.at(t, 0));
    std::sort(positive.begin(), positive.end());
    if (!positive.empty()) {
      tail_hi = positive[static_cast<std::size_t>(0.999 * (positive.size() - 1))];
      tail_lo = positive[static_cast<std::size_t>(0.005 * (positive.size() - 1))];
      tail_lo2 = positive[static_cast<std::size_t>(0.02 * (positive.size() - 1))];
    }
  }

  CriteriaTable table;
  std::optional<HmmSpec> previous_best;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const int n = ns[i];
    HmmSpec templ = make_template(family, n);
    FitConfig fit_cfg = config.fit;
    fit_cfg.seed = derive_seed(config.fit.seed, static_cast<std::uint64_t>(n));
    std::vector<HmmSpec> extra;
    if (config.nested_starts && previous_best.has_value() && previous_best->n_states == n - 1) {
      // Warm starts built from the (n-1)-state optimum: every state duplicated
      // exactly (likelihood-preserving) and once jittered off the symmetry
      // ridge, plus starts with the new state pushed into a tail, where the
      // high-likelihood spike solutions live.
      for (int s = 0; s < previous_best->n_states; ++s) {
        extra.push_back(duplicate_state(*previous_best, s, 0.0));
        extra.push_back(duplicate_state(*previous_best, s, 0.05));
      }
      auto tail_start = [&](double mean, double shape, int dup_state) {
        HmmSpec tail = duplicate_state(*previous_best, dup_state, 0.0);
        const int ins = dup_state + 1;
        // a tail state is entered rarely; shift most incoming mass back
        for (int r = 0; r < tail.n_states; ++r) {
          double both = tail.tpm[r][dup_state] + tail.tpm[r][ins];
          tail.tpm[r][dup_state] = 0.98 * both;
          tail.tpm[r][ins] = 0.02 * both;
        }
        Distribution& d = tail.channels[0][ins];
        if (std::get_if<Gamma>(&d)) {
          d = Gamma(mean, shape);
        } else if (const auto* z = std::get_if<ZeroInflatedGamma>(&d)) {
          d = ZeroInflatedGamma(std::min(z->zero_mass, 0.01), mean, shape);
        }
        extra.push_back(std::move(tail));
      };
      if (tail_hi > 0.0) tail_start(1.5 * tail_hi, 2.0, previous_best->n_states - 1);
      if (tail_lo > 0.0) tail_start(tail_lo, 10.0, 0);
      if (tail_lo2 > 0.0) tail_start(tail_lo2, 25.0, 0);
    }
    CriteriaRow row;
    row.n_states = n;
    try {
      FitResult fr = fit(data, templ, fit_cfg, extra);
      row = criteria_from_fit(fr, data);
      previous_best = fr.best_model;
      table.fits.push_back(std::move(fr));
    } catch (const FitFailure& e) {
      row.fit_ok = false;
      row.note = e.what();
      row.n_params = count_parameters(templ);
      table.fits.emplace_back();
      table.warnings.push_back("N=" + std::to_string(n) + ": " + e.what());
      previous_best.reset();
    }
    table.rows.push_back(std::move(row));
  }
  table.winners = criteria_winners(table.rows, &table.warnings);
  return table;
}

}  // namespace hmmsel
