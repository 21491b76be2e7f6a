#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hmmsel/bench.hpp"
#include "hmmsel/io.hpp"

using namespace hmmsel;

namespace {

ExperimentPlan desk_plan() {
  ExperimentPlan plan;
  plan.scenario = make_scenario_config("s8", 404);
  plan.scenario.T = 500;
  plan.replicates = 3;
  plan.n_range = {2, 3};
  plan.criteria.fit.n_starts = 5;
  plan.criteria.fit.seed = 404;
  plan.workers = 2;
  return plan;
}

std::string temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "hmmsel_bench_test";
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("desk-scale experiment emits well-formed tables") {
  ExperimentPlan plan = desk_plan();
  ExperimentResult r = run_experiment(plan);

  CHECK(r.records.size() == 6);  // 3 replicates x 2 state counts
  for (const auto& rec : r.records) {
    CHECK(rec.ok);
    CHECK(rec.T == 500);
    CHECK(static_cast<int>(rec.means.size()) == rec.n_states);
  }
  // selection percentages sum to 100 per criterion
  for (const char* criterion : {"aic", "bic", "icl"}) {
    double total = 0.0;
    for (int n : r.selection.n_range) total += r.selection.percentage(criterion, n);
    CHECK(total == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(r.selection.excluded.at(criterion) == 0);
  }
  // bias table covers both fitted Ns with truth attached for genuine states
  REQUIRE(r.bias.by_n.count(2) == 1);
  REQUIRE(r.bias.by_n.count(3) == 1);
  const auto& entries2 = r.bias.by_n.at(2);
  bool found_mean1 = false;
  for (const auto& e : entries2) {
    if (e.parameter == "mean_1") {
      found_mean1 = true;
      CHECK(e.true_value == doctest::Approx(0.5));
      CHECK(e.count == 3);
      CHECK(std::isfinite(e.sd));
    }
  }
  CHECK(found_mean1);
}

TEST_CASE("experiments are reproducible and re-aggregable") {
  ExperimentPlan plan = desk_plan();
  ExperimentResult a = run_experiment(plan);
  plan.workers = 1;  // scheduling must not matter
  ExperimentResult b = run_experiment(plan);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].log_lik == b.records[i].log_lik);
    CHECK(a.records[i].aic == b.records[i].aic);
    CHECK(a.records[i].means == b.records[i].means);
  }

  // selection recomputed from records matches the live run
  SelectionTable redo = selection_from_records(a.records, plan.n_range);
  for (const char* criterion : {"aic", "bic", "icl"})
    CHECK(redo.counts.at(criterion) == a.selection.counts.at(criterion));

  // records survive the JSONL round-trip; tables rebuild exactly
  std::string dir = temp_dir();
  std::string path = path_join(dir, "records.jsonl");
  write_records(a.records, path);
  std::vector<ReplicateRecord> back = read_records(path);
  REQUIRE(back.size() == a.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].log_lik == a.records[i].log_lik);
    CHECK(back[i].icl.has_value() == a.records[i].icl.has_value());
    if (back[i].icl) CHECK(*back[i].icl == *a.records[i].icl);
  }
  SelectionTable from_file = selection_from_records(back, plan.n_range);
  for (const char* criterion : {"aic", "bic", "icl"})
    CHECK(from_file.counts.at(criterion) == a.selection.counts.at(criterion));
  BiasTable bias_back = bias_summary(back, a.truth);
  for (const auto& [n, entries] : a.bias.by_n) {
    REQUIRE(bias_back.by_n.count(n) == 1);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      CHECK(bias_back.by_n.at(n)[i].parameter == entries[i].parameter);
      if (std::isfinite(entries[i].mean))
        CHECK(bias_back.by_n.at(n)[i].mean == entries[i].mean);
    }
  }

  // written artifacts are byte-identical across reruns
  std::string p1 = path_join(dir, "sel1.csv"), p2 = path_join(dir, "sel2.csv");
  write_selection_csv(a.selection, p1);
  write_selection_csv(b.selection, p2);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("single-replicate bias has no variance estimate") {
  ExperimentPlan plan = desk_plan();
  plan.replicates = 1;
  plan.n_range = {2};
  ExperimentResult r = run_experiment(plan);
  for (const auto& e : r.bias.by_n.at(2)) {
    CHECK(e.count == 1);
    CHECK(std::isnan(e.sd));
  }
}

TEST_CASE("failed fits are recorded and excluded with counts") {
  ExperimentPlan plan = desk_plan();
  plan.replicates = 2;
  plan.criteria.fit.max_iterations = 0;  // force universal failure
  plan.criteria.nested_starts = false;
  ExperimentResult r = run_experiment(plan);
  for (const auto& rec : r.records) {
    CHECK_FALSE(rec.ok);
    CHECK_FALSE(rec.error.empty());
  }
  for (const char* criterion : {"aic", "bic", "icl"})
    CHECK(r.selection.excluded.at(criterion) == 2);
  CHECK(r.bias.excluded.at(2) == 2);
  CHECK(r.bias.by_n.empty());
}

TEST_CASE("selection table csv shape") {
  ExperimentPlan plan = desk_plan();
  ExperimentResult r = run_experiment(plan);
  std::string path = path_join(temp_dir(), "selection.csv");
  write_selection_csv(r.selection, path);
  std::string text = slurp(path);
  CHECK(text.find("criterion,N2,N3,excluded") == 0);
  CHECK(text.find("aic,") != std::string::npos);
  CHECK(text.find("bic,") != std::string::npos);
  CHECK(text.find("icl,") != std::string::npos);
}

TEST_CASE("criteria recomputed from a serialized fit reproduce the row exactly") {
  ExperimentPlan plan = desk_plan();
  ScenarioOutput data = generate(plan.scenario);
  FitConfig fc;
  fc.n_starts = 5;
  fc.seed = 77;
  FitResult fr = fit(data.data, make_template({EmissionKind::Gamma}, 2), fc);
  CriteriaRow before = criteria_from_fit(fr, data.data);

  nlohmann::json j = fit_result_to_json(fr);
  FitResult back = fit_result_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.log_lik == fr.log_lik);
  CHECK(back.data_size == fr.data_size);
  REQUIRE(back.starts.size() == fr.starts.size());
  CHECK(back.starts[2].log_lik == fr.starts[2].log_lik);

  CriteriaRow after = criteria_from_fit(back, data.data);
  CHECK(after.log_lik == before.log_lik);
  CHECK(after.aic == before.aic);
  CHECK(after.bic == before.bic);
  CHECK(after.complete_data_log_lik == before.complete_data_log_lik);
  REQUIRE(after.icl.has_value() == before.icl.has_value());
  if (after.icl) CHECK(*after.icl == *before.icl);
}
