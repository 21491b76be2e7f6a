#include "hmmsel/bench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hmmsel/util.hpp"

namespace hmmsel {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void record_params(ReplicateRecord& rec, const HmmSpec& model) {
  for (int s = 0; s < model.n_states; ++s) {
    const Distribution& d = model.channels[0][s];
    if (const auto* g = std::get_if<Gamma>(&d)) {
      rec.means.push_back(g->mean);
      rec.shapes.push_back(g->shape);
    } else if (const auto* z = std::get_if<ZeroInflatedGamma>(&d)) {
      rec.means.push_back(z->mean);
      rec.shapes.push_back(z->shape);
      rec.zero_masses.push_back(z->zero_mass);
    } else {
      rec.means.push_back(mean_of(d));
      rec.shapes.push_back(kNaN);
    }
  }
}

}  // namespace

double SelectionTable::percentage(const std::string& criterion, int n) const {
  auto it = counts.find(criterion);
  if (it == counts.end() || replicates == 0) return 0.0;
  for (std::size_t i = 0; i < n_range.size(); ++i)
    if (n_range[i] == n)
      return 100.0 * static_cast<double>(it->second[i]) / static_cast<double>(replicates);
  return 0.0;
}

ExperimentResult run_experiment(const ExperimentPlan& plan) {
  if (plan.replicates < 1) throw std::invalid_argument("run_experiment: replicates must be >= 1");
  if (plan.n_range.empty()) throw std::invalid_argument("run_experiment: empty n_range");
  std::vector<int> n_range = plan.n_range;
  std::sort(n_range.begin(), n_range.end());
  n_range.erase(std::unique(n_range.begin(), n_range.end()), n_range.end());

  const std::uint64_t master = plan.scenario.seed;

  struct ReplicateOutcome {
    std::vector<ReplicateRecord> rows;
    ScenarioTruth truth;
    std::vector<std::string> warnings;
  };
  std::vector<ReplicateOutcome> outcomes(plan.replicates);

  parallel_for(plan.replicates, plan.workers, [&](std::size_t r) {
    ScenarioConfig sc = plan.scenario;
    sc.seed = derive_seed(master, 2 * r);
    ScenarioOutput generated = generate(sc);

    CriteriaConfig cc = plan.criteria;
    cc.fit.seed = derive_seed(master, 2 * r + 1);
    CriteriaTable table = criteria_table(generated.data, plan.family, n_range, cc);

    ReplicateOutcome& out = outcomes[r];
    out.truth = std::move(generated.truth);
    for (const auto& w : table.warnings)
      out.warnings.push_back("replicate " + std::to_string(r) + ": " + w);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const CriteriaRow& row = table.rows[i];
      ReplicateRecord rec;
      rec.replicate = static_cast<int>(r);
      rec.n_states = row.n_states;
      rec.ok = row.fit_ok;
      rec.error = row.fit_ok ? "" : row.note;
      rec.n_params = row.n_params;
      if (row.fit_ok) {
        rec.T = table.fits[i].data_size;
        rec.log_lik = row.log_lik;
        rec.complete_data_log_lik = row.complete_data_log_lik;
        rec.aic = row.aic;
        rec.bic = row.bic;
        rec.icl = row.icl;
        record_params(rec, table.fits[i].best_model);
        rec.n_starts = static_cast<int>(table.fits[i].starts.size());
        for (const auto& s : table.fits[i].starts) {
          rec.n_converged += s.converged ? 1 : 0;
          rec.n_boundary += s.boundary ? 1 : 0;
        }
      }
      out.rows.push_back(std::move(rec));
    }
  });

  ExperimentResult result;
  result.truth = outcomes.empty() ? ScenarioTruth{} : outcomes.front().truth;
  for (auto& o : outcomes) {
    for (auto& rec : o.rows) result.records.push_back(std::move(rec));
    for (auto& w : o.warnings) result.warnings.push_back(std::move(w));
  }
  result.selection = selection_from_records(result.records, n_range);
  result.bias = bias_summary(result.records, result.truth);
  return result;
}

SelectionTable selection_from_records(const std::vector<ReplicateRecord>& records,
                                      const std::vector<int>& n_range) {
  SelectionTable table;
  table.n_range = n_range;
  const char* criteria[] = {"aic", "bic", "icl"};
  for (const char* c : criteria) {
    table.counts[c] = std::vector<int>(n_range.size(), 0);
    table.excluded[c] = 0;
  }

  std::map<int, std::vector<const ReplicateRecord*>> by_replicate;
  for (const auto& rec : records) by_replicate[rec.replicate].push_back(&rec);
  table.replicates = static_cast<int>(by_replicate.size());

  for (auto& [r, rows] : by_replicate) {
    bool complete = rows.size() == n_range.size();
    for (const auto* rec : rows) complete = complete && rec->ok;
    if (!complete) {
      for (const char* c : criteria) ++table.excluded[c];
      continue;
    }
    // Rebuild criteria rows and reuse the winner rules.
    std::vector<CriteriaRow> crows;
    for (const auto* rec : rows) {
      CriteriaRow row;
      row.n_states = rec->n_states;
      row.n_params = rec->n_params;
      row.log_lik = rec->log_lik;
      row.complete_data_log_lik = rec->complete_data_log_lik;
      row.aic = rec->aic;
      row.bic = rec->bic;
      row.icl = rec->icl;
      crows.push_back(row);
    }
    std::sort(crows.begin(), crows.end(),
              [](const CriteriaRow& a, const CriteriaRow& b) { return a.n_states < b.n_states; });
    std::map<std::string, int> winners = criteria_winners(crows);
    for (const char* c : criteria) {
      auto it = winners.find(c);
      if (it == winners.end()) {
        ++table.excluded[c];
        continue;
      }
      for (std::size_t i = 0; i < n_range.size(); ++i)
        if (n_range[i] == it->second) ++table.counts[c][i];
    }
  }
  return table;
}

BiasTable bias_summary(const std::vector<ReplicateRecord>& records, const ScenarioTruth& truth) {
  // Truth matched by ascending mean, mirroring the canonical estimate order.
  std::vector<std::pair<double, double>> truth_sorted;
  for (std::size_t i = 0; i < truth.true_means.size(); ++i)
    truth_sorted.emplace_back(truth.true_means[i],
                              i < truth.true_shapes.size() ? truth.true_shapes[i] : kNaN);
  std::sort(truth_sorted.begin(), truth_sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  BiasTable table;
  std::map<int, std::vector<const ReplicateRecord*>> by_n;
  for (const auto& rec : records) {
    if (rec.ok) {
      by_n[rec.n_states].push_back(&rec);
    } else {
      ++table.excluded[rec.n_states];
    }
  }

  for (auto& [n, rows] : by_n) {
    std::vector<BiasTable::Entry> entries;
    auto add_entry = [&](const std::string& name, double true_value,
                         auto value_of) {
      std::vector<double> vals;
      for (const auto* rec : rows) {
        double v = value_of(*rec);
        if (!std::isnan(v)) vals.push_back(v);
      }
      BiasTable::Entry e;
      e.parameter = name;
      e.true_value = true_value;
      e.count = static_cast<long>(vals.size());
      if (vals.empty()) {
        e.mean = kNaN;
        e.sd = kNaN;
      } else {
        double m = 0.0;
        for (double v : vals) m += v;
        m /= static_cast<double>(vals.size());
        e.mean = m;
        if (vals.size() >= 2) {
          double s = 0.0;
          for (double v : vals) s += (v - m) * (v - m);
          e.sd = std::sqrt(s / static_cast<double>(vals.size() - 1));
        } else {
          e.sd = kNaN;  // single replicate: no variance estimate
        }
      }
      entries.push_back(std::move(e));
    };

    bool has_zero_mass = false;
    for (const auto* rec : rows) has_zero_mass = has_zero_mass || !rec->zero_masses.empty();
    for (int s = 0; s < n; ++s) {
      double tm = s < static_cast<int>(truth_sorted.size()) ? truth_sorted[s].first : kNaN;
      add_entry("mean_" + std::to_string(s + 1), tm, [s](const ReplicateRecord& r) {
        return s < static_cast<int>(r.means.size()) ? r.means[s] : kNaN;
      });
    }
    for (int s = 0; s < n; ++s) {
      double ts = s < static_cast<int>(truth_sorted.size()) ? truth_sorted[s].second : kNaN;
      add_entry("shape_" + std::to_string(s + 1), ts, [s](const ReplicateRecord& r) {
        return s < static_cast<int>(r.shapes.size()) ? r.shapes[s] : kNaN;
      });
    }
    if (has_zero_mass) {
      for (int s = 0; s < n; ++s) {
        add_entry("zero_mass_" + std::to_string(s + 1), kNaN, [s](const ReplicateRecord& r) {
          return s < static_cast<int>(r.zero_masses.size()) ? r.zero_masses[s] : kNaN;
        });
      }
    }
    table.by_n[n] = std::move(entries);
  }
  return table;
}

}  // namespace hmmsel
