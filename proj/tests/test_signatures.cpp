// Slow qualitative check: on misspecified scenarios, AIC picks more than the
// two genuine states more often than BIC does. Runs the two scenarios not
// already covered by the acceptance experiments; s4 also exercises fitting
// across ten shared-parameter tracks.
#include <doctest.h>

#include "hmmsel/bench.hpp"

using namespace hmmsel;

TEST_CASE("AIC overselects misspecified scenarios more often than BIC") {
  int aic_over = 0, bic_over = 0, total = 0;
  for (const char* id : {"s4", "s6"}) {
    ExperimentPlan plan;
    plan.scenario = make_scenario_config(id, 4242);
    if (plan.scenario.id != "s4") plan.scenario.T = 2500;
    plan.replicates = 8;
    plan.n_range = {2, 3, 4};
    plan.criteria.fit.n_starts = 12;
    plan.workers = 2;
    ExperimentResult r = run_experiment(plan);
    for (const auto& [criterion, counts] : r.selection.counts) {
      int over = counts[1] + counts[2];  // N=3 or N=4
      if (criterion == "aic") aic_over += over;
      if (criterion == "bic") bic_over += over;
    }
    total += plan.replicates;
    // every replicate fitted all three state counts
    for (const auto& rec : r.records) CHECK(rec.ok);
  }
  CHECK(total == 16);
  CHECK(aic_over > bic_over);
  CHECK(aic_over >= total / 2);
}
