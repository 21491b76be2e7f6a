// Acceptance suite: one test case per criterion, each printing a single
// [PASS]/[FAIL] line with the measured quantities. Run through ctest (one
// entry per criterion) or directly: ./acceptance --test-case='*criterion 3*'.
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hmmsel/bench.hpp"
#include "hmmsel/diagnose.hpp"
#include "hmmsel/io.hpp"
#include "hmmsel/movement.hpp"
#include "hmmsel/scenarios.hpp"
#include "hmmsel/select.hpp"
#include "hmmsel/stats.hpp"
#include "hmmsel/util.hpp"
#include "support/builders.hpp"
#include "support/oracles.hpp"

using namespace hmmsel;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kMasterSeed = 20250811;

bool report(bool ok, const char* fmt, ...) {
  std::printf("[%s] ", ok ? "PASS" : "FAIL");
  va_list args;
  va_start(args, fmt);
  std::vprintf(fmt, args);
  va_end(args);
  std::printf("\n");
  std::fflush(stdout);
  return ok;
}

ExperimentPlan desk_plan(const std::string& scenario, std::vector<int> n_range) {
  ExperimentPlan plan;
  plan.scenario = make_scenario_config(scenario, kMasterSeed);
  plan.replicates = 20;
  plan.n_range = std::move(n_range);
  plan.criteria.fit.n_starts = 25;
  plan.criteria.fit.n_threads = 1;
  plan.workers = 2;
  return plan;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("criterion 1: forward, Viterbi and forecast cdf match enumeration") {
  auto t0 = std::chrono::steady_clock::now();
  RandomStream rng(kMasterSeed);
  int checked_cdf = 0;
  double worst_ll = 0.0, worst_cdf = 0.0;
  bool viterbi_ok = true;
  for (int rep = 0; rep < 200; ++rep) {
    int n = 1 + static_cast<int>(rng.uniform_int(3));
    int T = 2 + static_cast<int>(rng.uniform_int(7));
    HmmSpec m = hmmsel::testing::random_gamma_hmm(n, rng);
    auto [data, states] = simulate(m, {T}, rng);
    double fast = log_likelihood(m, data);
    double slow = hmmsel::testing::enum_log_likelihood(m, data);
    worst_ll = std::max(worst_ll, std::abs(fast - slow) / std::abs(slow));
    viterbi_ok =
        viterbi_ok && viterbi(m, data).tracks[0] == hmmsel::testing::enum_viterbi(m, data.tracks[0]);
    for (int t = 0; t < T; ++t) {
      double a = one_step_cdf(m, data, 0, t, 0);
      double b = hmmsel::testing::enum_one_step_cdf(m, data.tracks[0], t, 0);
      worst_cdf = std::max(worst_cdf, std::abs(a - b));
      ++checked_cdf;
    }
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool ok = worst_ll <= 1e-8 && viterbi_ok && worst_cdf <= 1e-10 && secs < 60.0;
  report(ok,
         "criterion 1: oracle equivalence on 200 instances (max rel loglik err %.2e, viterbi "
         "%s, max cdf err %.2e on %d points, %.1fs)",
         worst_ll, viterbi_ok ? "exact" : "MISMATCH", worst_cdf, checked_cdf, secs);
  CHECK(worst_ll <= 1e-8);
  CHECK(viterbi_ok);
  CHECK(worst_cdf <= 1e-10);
  CHECK(secs < 60.0);
}

TEST_CASE("criterion 2: parameter counts and criteria arithmetic") {
  bool counts_ok = true;
  for (auto [n, expected] : {std::pair{2, 12}, {3, 21}, {4, 32}, {5, 45}}) {
    counts_ok = counts_ok &&
                count_parameters(make_template(
                    {EmissionKind::ZeroInflatedGamma, EmissionKind::VonMises}, n)) == expected;
  }

  // bic - aic = p (ln T - 2) to machine precision on real fitted rows
  HmmSpec base = hmmsel::testing::baseline2();
  RandomStream rng(kMasterSeed + 2);
  auto [data, states] = simulate(base, {600}, rng);
  CriteriaConfig cc;
  cc.fit.n_starts = 8;
  cc.fit.seed = kMasterSeed;
  cc.fit.n_threads = 2;
  CriteriaTable table = criteria_table(data, {EmissionKind::Gamma}, {1, 2, 3, 4, 5}, cc);
  const double lnT = std::log(static_cast<double>(data.n_observed_slots()));
  double worst = 0.0;
  for (const auto& row : table.rows) {
    double identity = (row.bic - row.aic) - row.n_params * (lnT - 2.0);
    worst = std::max(worst, std::abs(identity) / (1.0 + std::abs(row.bic)));
  }
  bool identity_ok = worst <= 1e-12;
  bool ok = counts_ok && identity_ok;
  report(ok, "criterion 2: movement-family p = 12/21/32/45 (%s); bic-aic identity residual %.1e",
         counts_ok ? "ok" : "WRONG", worst);
  CHECK(counts_ok);
  CHECK(identity_ok);
}

TEST_CASE("criterion 3: scenario 8 benchmark selection") {
  ExperimentPlan plan = desk_plan("s8", {2, 3, 4});
  ExperimentResult r = run_experiment(plan);
  double bic2 = r.selection.percentage("bic", 2);
  double icl2 = r.selection.percentage("icl", 2);
  double aic_over = r.selection.percentage("aic", 3) + r.selection.percentage("aic", 4);

  // nested-model monotonicity on these seeded runs
  bool monotone = true;
  for (int rep = 0; rep < plan.replicates; ++rep) {
    double prev = -std::numeric_limits<double>::infinity();
    for (const auto& rec : r.records) {
      if (rec.replicate != rep || !rec.ok) continue;
      monotone = monotone && rec.log_lik >= prev - 1e-6;
      prev = rec.log_lik;
    }
  }
  bool ok = bic2 >= 90.0 && icl2 >= 90.0 && aic_over >= 40.0 && monotone;
  report(ok,
         "criterion 3: s8 desk scale (bic@2 %.0f%% >= 90, icl@2 %.0f%% >= 90, aic@>=3 %.0f%% >= "
         "40, loglik monotone in N: %s)",
         bic2, icl2, aic_over, monotone ? "yes" : "NO");
  CHECK(bic2 >= 90.0);
  CHECK(icl2 >= 90.0);
  CHECK(aic_over >= 40.0);
  CHECK(monotone);
}

TEST_CASE("criterion 4: scenario 5 (semi-Markov) selection") {
  ExperimentPlan plan = desk_plan("s5", {2, 3, 4});
  ExperimentResult r = run_experiment(plan);
  double bic3 = r.selection.percentage("bic", 3);
  double icl2 = r.selection.percentage("icl", 2);
  bool ok = bic3 >= 80.0 && icl2 >= 80.0;
  report(ok, "criterion 4: s5 desk scale (bic@3 %.0f%% >= 80, icl@2 %.0f%% >= 80)", bic3, icl2);
  CHECK(bic3 >= 80.0);
  CHECK(icl2 >= 80.0);
}

TEST_CASE("criterion 5: scenario 2 (spline emission) selection and equivalence") {
  // mixture/three-state equivalence at 1e-10 on enumeration likelihoods
  const double g11 = 0.9, g22 = 0.88, alpha = 0.4;
  HmmSpec mix;
  mix.n_states = 2;
  mix.tpm = {{g11, 1.0 - g11}, {1.0 - g22, g22}};
  mix.channels.resize(1);
  mix.channels[0].push_back(Gamma(0.5, 0.7));
  mix.channels[0].push_back(
      GammaMixture({alpha, 1.0 - alpha}, {Gamma(2.5, 2.0), Gamma(8.0, 3.0)}));
  HmmSpec three;
  three.n_states = 3;
  three.tpm = equivalent_three_state_tpm(g11, g22, alpha);
  three.channels.resize(1);
  three.channels[0].push_back(Gamma(0.5, 0.7));
  three.channels[0].push_back(Gamma(2.5, 2.0));
  three.channels[0].push_back(Gamma(8.0, 3.0));
  ObservationSeries small = ObservationSeries::univariate({0.3, 2.8, 9.5, 0.4, 4.4, 1.1});
  double ll_mix = hmmsel::testing::enum_log_likelihood(mix, small);
  double ll_three = hmmsel::testing::enum_log_likelihood(three, small);
  bool equiv_ok = std::abs(ll_mix - ll_three) <= 1e-10 * std::abs(ll_three);

  ExperimentPlan plan = desk_plan("s2", {2, 3, 4});
  ExperimentResult r = run_experiment(plan);
  double bic3 = r.selection.percentage("bic", 3);
  bool ok = bic3 >= 80.0 && equiv_ok;
  report(ok, "criterion 5: s2 desk scale (bic@3 %.0f%% >= 80; equivalence gap %.1e <= 1e-10 rel)",
         bic3, std::abs(ll_mix - ll_three) / std::abs(ll_three));
  CHECK(bic3 >= 80.0);
  CHECK(equiv_ok);
}

TEST_CASE("criterion 6: scenario 1 estimation bias") {
  ExperimentPlan plan = desk_plan("s1", {2, 3});
  ExperimentResult r = run_experiment(plan);
  double mean2_of_2state = 0.0, mean2_of_3state = 0.0;
  for (const auto& e : r.bias.by_n.at(2))
    if (e.parameter == "mean_2") mean2_of_2state = e.mean;
  for (const auto& e : r.bias.by_n.at(3))
    if (e.parameter == "mean_2") mean2_of_3state = e.mean;
  bool two_ok = mean2_of_2state >= 4.05 && mean2_of_2state <= 4.17;
  bool three_ok = mean2_of_3state >= 3.97 && mean2_of_3state <= 4.02;
  bool ok = two_ok && three_ok;
  report(ok,
         "criterion 6: s1 bias (2-state mean2 %.3f in [4.05,4.17]; 3-state mean2 %.3f in "
         "[3.97,4.02])",
         mean2_of_2state, mean2_of_3state);
  CHECK(two_ok);
  CHECK(three_ok);
}

TEST_CASE("criterion 7: appendix scenarios 9 and 10") {
  bool all_ok = true;
  for (const char* id : {"s9", "s10"}) {
    ExperimentPlan plan = desk_plan(id, {2, 3, 4});
    ExperimentResult r = run_experiment(plan);
    double bic3 = r.selection.percentage("bic", 3);
    double bic2 = r.selection.percentage("bic", 2);
    double icl2 = r.selection.percentage("icl", 2);
    bool ok = bic3 >= 85.0 && icl2 > bic2;
    all_ok = all_ok && ok;
    report(ok, "criterion 7: %s desk scale (bic@3 %.0f%% >= 85; icl@2 %.0f%% > bic@2 %.0f%%)", id,
           bic3, icl2, bic2);
    CHECK(bic3 >= 85.0);
    CHECK(icl2 > bic2);
  }
  (void)all_ok;
}

TEST_CASE("criterion 8: residual diagnostics properties") {
  // (a) residuals of data simulated from the fitted model are normal
  HmmSpec base = baseline_model();
  RandomStream gen_rng(derive_seed(kMasterSeed, 80));
  auto [fit_data, fit_states] = simulate(base, {5000}, gen_rng);
  FitConfig fc;
  fc.n_starts = 25;
  fc.seed = derive_seed(kMasterSeed, 81);
  fc.n_threads = 2;
  FitResult fitted = fit(fit_data, make_template({EmissionKind::Gamma}, 2), fc);

  int ks_pass = 0;
  for (int run = 0; run < 100; ++run) {
    RandomStream rng(derive_seed(kMasterSeed, 8200 + run));
    auto [sim, sim_states] = simulate(fitted.best_model, {5000}, rng);
    RandomStream resid_rng(derive_seed(kMasterSeed, 8300 + run));
    ResidualSeries z = pseudo_residuals(fitted.best_model, sim, 0, resid_rng);
    std::vector<double> values;
    for (double v : z.tracks[0])
      if (!std::isnan(v)) values.push_back(v);
    double ks = ks_statistic(values, [](double x) { return normal_cdf(x); });
    if (ks < ks_critical_value(0.01, values.size())) ++ks_pass;
  }
  bool ks_ok = ks_pass >= 95;
  report(ks_ok, "criterion 8a: KS normality of self-simulated residuals (%d/100 >= 95)", ks_pass);

  // (b) diel signature of scenario-3 residuals at the daily lag
  int acf_hits = 0;
  double mean_acf96 = 0.0;
  for (int run = 0; run < 20; ++run) {
    ScenarioConfig sc = make_scenario_config("s3", derive_seed(kMasterSeed, 8400 + run));
    ScenarioOutput out = generate(sc);
    FitConfig s3fc;
    s3fc.n_starts = 25;
    s3fc.seed = derive_seed(kMasterSeed, 8500 + run);
    s3fc.n_threads = 2;
    FitResult hom = fit(out.data, make_template({EmissionKind::Gamma}, 2), s3fc);
    RandomStream resid_rng(derive_seed(kMasterSeed, 8600 + run));
    ResidualSeries z = pseudo_residuals(hom.best_model, out.data, 0, resid_rng);
    std::vector<double> a = acf(z, 96);
    long n = 0;
    for (double v : z.tracks[0]) n += !std::isnan(v);
    if (std::abs(a[96]) > 3.0 / std::sqrt(static_cast<double>(n))) ++acf_hits;
    mean_acf96 += a[96] / 20.0;
  }
  bool acf_ok = acf_hits >= 16;
  report(acf_ok,
         "criterion 8b: s3 diel signature |acf(96)| above 3/sqrt(n) in %d/20 runs (>= 16 "
         "required; mean acf(96) %+.4f). Known shortfall: forecast conditioning absorbs the "
         "transition-only diel cycle; see README.md.",
         acf_hits, mean_acf96);
  CHECK(ks_ok);
  CHECK(acf_ok);
}

TEST_CASE("criterion 9: byte-identical reruns of bench and pipeline") {
  const char* cli = HMMSEL_CLI_PATH;
  fs::path dir = fs::temp_directory_path() / "hmmsel_acceptance_c9";
  fs::create_directories(dir);

  auto run_cli = [&](const std::string& args) {
    std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  auto tree_equal = [&](const fs::path& a, const fs::path& b) {
    std::vector<std::string> names;
    for (const auto& e : fs::recursive_directory_iterator(a))
      if (e.is_regular_file()) names.push_back(fs::relative(e.path(), a).string());
    std::sort(names.begin(), names.end());
    for (const auto& n : names)
      if (!fs::exists(b / n) || slurp(a / n) != slurp(b / n)) return false;
    return true;
  };

  {
    std::ofstream cfg(dir / "bench.json");
    cfg << R"({"scenario":"s8","replicates":4,"T":600,"n_range":[2,3],"starts":6,)"
        << R"("seed":31415,"workers":2})";
  }
  bool bench_ok = run_cli("bench --config " + (dir / "bench.json").string() + " --out " +
                          (dir / "b1").string() + " --quiet") == 0 &&
                  run_cli("bench --config " + (dir / "bench.json").string() + " --out " +
                          (dir / "b2").string() + " --quiet") == 0 &&
                  tree_equal(dir / "b1", dir / "b2");

  {
    std::ofstream cfg(dir / "move.json");
    cfg << R"({"synthesize":{"model":{"schema":"hmmsel-model#1","n_states":2,)"
        << R"("init":"stationary","tpm":[[0.9,0.1],[0.1,0.9]],"channels":[)"
        << R"([{"family":"zero_inflated_gamma","zero_mass":0.2,"mean":5.0,"shape":0.9},)"
        << R"({"family":"zero_inflated_gamma","zero_mass":0.01,"mean":200.0,"shape":2.0}],)"
        << R"([{"family":"von_mises","location":3.1,"concentration":0.5},)"
        << R"({"family":"von_mises","location":0.0,"concentration":1.5}]]},"lengths":[400]},)"
        << R"("n_range":[2],"starts":6,"seed":2718,"max_lag":30})";
  }
  bool move_ok = run_cli("movement --config " + (dir / "move.json").string() + " --out " +
                         (dir / "m1").string() + " --quiet") == 0 &&
                 run_cli("movement --config " + (dir / "move.json").string() + " --out " +
                         (dir / "m2").string() + " --quiet") == 0 &&
                 tree_equal(dir / "m1", dir / "m2");

  bool ok = bench_ok && move_ok;
  report(ok, "criterion 9: same-seed reruns byte-identical (bench %s, movement pipeline %s)",
         bench_ok ? "yes" : "NO", move_ok ? "yes" : "NO");
  CHECK(bench_ok);
  CHECK(move_ok);
}

TEST_CASE("criterion 10: movement pipeline self-consistency") {
  // rigid-motion invariance at 1e-10
  RandomStream geo_rng(derive_seed(kMasterSeed, 100));
  std::vector<std::pair<double, double>> pts;
  double px = 0, py = 0;
  for (int i = 0; i < 200; ++i) {
    pts.emplace_back(px, py);
    px += 40.0 * geo_rng.normal();
    py += 40.0 * geo_rng.normal();
  }
  Track raw;
  raw.id = "inv";
  raw.interval_seconds = 3600;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    raw.timestamps.push_back(3600LL * static_cast<long long>(i));
    raw.x.push_back(pts[i].first);
    raw.y.push_back(pts[i].second);
  }
  ObsTrack mv0 = steps_and_turns(raw);
  double worst = 0.0;
  for (double theta : {0.7, -2.2}) {
    Track moved = raw;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      moved.x[i] = std::cos(theta) * pts[i].first - std::sin(theta) * pts[i].second + 1234.5;
      moved.y[i] = std::sin(theta) * pts[i].first + std::cos(theta) * pts[i].second - 987.0;
    }
    ObsTrack mv1 = steps_and_turns(moved);
    for (int t = 0; t < mv0.n_slots; ++t)
      for (int c = 0; c < 2; ++c)
        if (!std::isnan(mv0.at(t, c)))
          worst = std::max(worst, std::abs(mv0.at(t, c) - mv1.at(t, c)));
  }
  bool rigid_ok = worst <= 1e-10;

  // BIC recovers the generating three-state movement model
  HmmSpec gen;
  gen.n_states = 3;
  gen.tpm = {{0.85, 0.1, 0.05}, {0.1, 0.8, 0.1}, {0.05, 0.1, 0.85}};
  gen.init = InitMode::Stationary;
  gen.channels.resize(2);
  gen.channels[0] = {Distribution(ZeroInflatedGamma(0.25, 5.0, 0.9)),
                     Distribution(ZeroInflatedGamma(0.02, 60.0, 1.6)),
                     Distribution(ZeroInflatedGamma(0.005, 300.0, 3.0))};
  gen.channels[1] = {Distribution(VonMises(3.14159, 0.4)), Distribution(VonMises(0.0, 0.6)),
                     Distribution(VonMises(0.0, 2.5))};
  int bic3_wins = 0;
  for (int run = 0; run < 20; ++run) {
    RandomStream rng(derive_seed(kMasterSeed, 10100 + run));
    std::vector<Track> tracks = synthesize_tracks(gen, {1500}, 3600, rng);
    PipelineConfig pc;
    pc.n_range = {2, 3, 4};
    pc.criteria.fit.n_starts = 12;
    pc.criteria.fit.seed = derive_seed(kMasterSeed, 10200 + run);
    pc.criteria.fit.n_threads = 2;
    pc.residual_seed = derive_seed(kMasterSeed, 10300 + run);
    PipelineReport report_bundle = case_study_pipeline(tracks, pc);
    auto it = report_bundle.criteria.winners.find("bic");
    if (it != report_bundle.criteria.winners.end() && it->second == 3) ++bic3_wins;
  }
  bool bic_ok = bic3_wins >= 18;
  bool ok = rigid_ok && bic_ok;
  report(ok,
         "criterion 10: movement self-consistency (rigid-motion max delta %.1e <= 1e-10; bic@3 "
         "in %d/20 runs >= 18)",
         worst, bic3_wins);
  CHECK(rigid_ok);
  CHECK(bic_ok);
}
