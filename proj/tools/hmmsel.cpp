// Command-line front end: simulate / fit / select / diagnose / bench /
// movement, each driven by a declarative JSON config. Flags override config
// values; every run writes manifest.json (config fingerprint + seed) next to
// its outputs, and all randomness derives from that one seed.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "hmmsel/bench.hpp"
#include "hmmsel/diagnose.hpp"
#include "hmmsel/io.hpp"
#include "hmmsel/movement.hpp"
#include "hmmsel/scenarios.hpp"
#include "hmmsel/select.hpp"
#include "hmmsel/util.hpp"

using nlohmann::json;
using namespace hmmsel;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool quiet = false;
};

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return json::parse(in);
}

ScenarioConfig scenario_from_json(const json& j, std::uint64_t seed) {
  std::string id = j.at("scenario").get<std::string>();
  ScenarioConfig c = make_scenario_config(id, seed);
  if (j.contains("T")) c.T = j.at("T").get<long>();
  if (j.contains("n_tracks")) c.n_tracks = j.at("n_tracks").get<int>();
  c.outlier_fraction = j.value("outlier_fraction", c.outlier_fraction);
  c.outlier_lo = j.value("outlier_lo", c.outlier_lo);
  c.outlier_hi = j.value("outlier_hi", c.outlier_hi);
  c.diel_period = j.value("diel_period", c.diel_period);
  c.diel_a = j.value("diel_a", c.diel_a);
  c.diel_b = j.value("diel_b", c.diel_b);
  c.diel_phase = j.value("diel_phase", c.diel_phase);
  c.hetero_log_mean = j.value("hetero_log_mean", c.hetero_log_mean);
  c.hetero_log_sd = j.value("hetero_log_sd", c.hetero_log_sd);
  c.dwell_mean = j.value("dwell_mean", c.dwell_mean);
  c.dwell_truncated = j.value("dwell_truncated", c.dwell_truncated);
  c.switch_after_pair = j.value("switch_after_pair", c.switch_after_pair);
  c.switch_after_entry = j.value("switch_after_entry", c.switch_after_entry);
  c.ar_coeff = j.value("ar_coeff", c.ar_coeff);
  c.ar_sd = j.value("ar_sd", c.ar_sd);
  return c;
}

FitConfig fit_config_from_json(const json& j, std::uint64_t seed, int workers) {
  FitConfig c;
  c.n_starts = j.value("starts", 25);
  c.seed = seed;
  c.max_iterations = j.value("max_iterations", 1000);
  c.tolerance = j.value("tolerance", 1e-8);
  c.n_threads = workers;
  return c;
}

std::vector<EmissionKind> family_from_json(const json& j,
                                           const std::vector<std::string>& fallback) {
  std::vector<std::string> names = fallback;
  if (j.contains("family")) names = j.at("family").get<std::vector<std::string>>();
  std::vector<EmissionKind> family;
  for (const auto& n : names) family.push_back(emission_kind_from_name(n));
  return family;
}

std::vector<int> n_range_from_json(const json& j) {
  std::vector<int> ns = j.value("n_range", std::vector<int>{2, 3, 4, 5});
  if (ns.empty()) throw std::runtime_error("config: n_range must not be empty");
  return ns;
}

json truth_to_json(const ScenarioTruth& truth) {
  json t;
  t["schema"] = "hmmsel-truth#1";
  t["description"] = truth.description;
  t["n_true_states"] = truth.n_true_states;
  t["true_means"] = truth.true_means;
  json shapes = json::array();
  for (double s : truth.true_shapes) shapes.push_back(std::isnan(s) ? json(nullptr) : json(s));
  t["true_shapes"] = shapes;
  if (!truth.contaminated_slots.empty()) t["contaminated_slots"] = truth.contaminated_slots;
  if (!truth.track_state2_means.empty()) t["track_state2_means"] = truth.track_state2_means;
  return t;
}

int run_simulate(const CommonArgs& args, const json& cfg) {
  std::uint64_t seed = args.seed.value_or(cfg.value("seed", 1));
  ScenarioConfig sc = scenario_from_json(cfg, seed);
  ScenarioOutput out = generate(sc);
  ensure_directory(args.out_dir);
  write_dataset(out.data, &out.true_states, path_join(args.out_dir, "dataset.tsv"));
  {
    std::ofstream f(path_join(args.out_dir, "truth.json"));
    f << truth_to_json(out.truth).dump(2) << "\n";
  }
  write_manifest("simulate", seed, cfg, args.out_dir);
  if (!args.quiet)
    std::fprintf(stderr, "simulate %s: %d track(s), T=%ld -> %s\n", sc.id.c_str(), sc.n_tracks,
                 sc.T, args.out_dir.c_str());
  return 0;
}

int run_fit(const CommonArgs& args, const json& cfg) {
  std::uint64_t seed = args.seed.value_or(cfg.value("seed", 1));
  Dataset ds = read_dataset(cfg.at("data").get<std::string>());
  std::vector<EmissionKind> family = family_from_json(cfg, {"gamma"});
  if (static_cast<int>(family.size()) != ds.series.n_channels())
    throw std::runtime_error("fit: family size does not match the dataset channel count");
  int n_states = cfg.at("n_states").get<int>();
  FitConfig fc = fit_config_from_json(cfg, seed, args.workers.value_or(cfg.value("workers", 1)));
  FitResult fr = fit(ds.series, make_template(family, n_states), fc);
  ensure_directory(args.out_dir);
  write_model(fr.best_model, path_join(args.out_dir, "model.json"));
  {
    std::ofstream f(path_join(args.out_dir, "fit.json"));
    f << fit_result_to_json(fr).dump(2) << "\n";
  }
  write_manifest("fit", seed, cfg, args.out_dir);
  if (!args.quiet)
    std::fprintf(stderr, "fit N=%d: log_lik=%.6f (p=%d, T=%ld)\n", n_states, fr.log_lik,
                 fr.n_params, fr.data_size);
  return 0;
}

int run_select(const CommonArgs& args, const json& cfg) {
  std::uint64_t seed = args.seed.value_or(cfg.value("seed", 1));
  Dataset ds = read_dataset(cfg.at("data").get<std::string>());
  std::vector<EmissionKind> family = family_from_json(cfg, {"gamma"});
  if (static_cast<int>(family.size()) != ds.series.n_channels())
    throw std::runtime_error("select: family size does not match the dataset channel count");
  CriteriaConfig cc;
  cc.fit = fit_config_from_json(cfg, seed, args.workers.value_or(cfg.value("workers", 1)));
  cc.nested_starts = cfg.value("nested_starts", true);
  CriteriaTable table = criteria_table(ds.series, family, n_range_from_json(cfg), cc);
  ensure_directory(args.out_dir);
  write_criteria_csv(table.rows, path_join(args.out_dir, "criteria.csv"));
  ensure_directory(path_join(args.out_dir, "models"));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (!table.rows[i].fit_ok) continue;
    write_model(table.fits[i].best_model,
                path_join(args.out_dir,
                          "models/model_" + std::to_string(table.rows[i].n_states) + ".json"));
  }
  {
    json summary;
    summary["schema"] = "hmmsel-select#1";
    summary["winners"] = table.winners;
    summary["warnings"] = table.warnings;
    std::ofstream f(path_join(args.out_dir, "summary.json"));
    f << summary.dump(2) << "\n";
  }
  write_manifest("select", seed, cfg, args.out_dir);
  if (!args.quiet) {
    for (const auto& [criterion, n] : table.winners)
      std::fprintf(stderr, "select: %s -> N=%d\n", criterion.c_str(), n);
  }
  return 0;
}

int run_diagnose(const CommonArgs& args, const json& cfg) {
  std::uint64_t seed = args.seed.value_or(cfg.value("seed", 1));
  Dataset ds = read_dataset(cfg.at("data").get<std::string>());
  HmmSpec model = read_model(cfg.at("model").get<std::string>());
  int channel = cfg.value("channel", 0);
  int min_slots = ds.series.tracks.front().n_slots;
  for (const auto& tr : ds.series.tracks) min_slots = std::min(min_slots, tr.n_slots);
  int max_lag = std::min(cfg.value("max_lag", 50), min_slots - 1);
  RandomStream rng(seed);
  ResidualSeries resid = pseudo_residuals(model, ds.series, channel, rng);
  ensure_directory(args.out_dir);
  {
    std::ofstream f(path_join(args.out_dir, "residuals.tsv"));
    f << "track\tslot\tz\n";
    for (std::size_t k = 0; k < resid.tracks.size(); ++k)
      for (std::size_t t = 0; t < resid.tracks[k].size(); ++t)
        f << k << '\t' << t << '\t'
          << (std::isnan(resid.tracks[k][t]) ? "NA" : format_double(resid.tracks[k][t])) << "\n";
  }
  {
    std::ofstream f(path_join(args.out_dir, "qq.tsv"));
    f << "theoretical\tsample\n";
    for (const auto& [q, z] : qq_points(resid))
      f << format_double(q) << '\t' << format_double(z) << "\n";
  }
  {
    std::ofstream f(path_join(args.out_dir, "acf.tsv"));
    f << "lag\tacf\n";
    std::vector<double> a = acf(resid, max_lag);
    for (std::size_t lag = 0; lag < a.size(); ++lag)
      f << lag << '\t' << format_double(a[lag]) << "\n";
  }
  write_manifest("diagnose", seed, cfg, args.out_dir);
  if (!args.quiet)
    std::fprintf(stderr, "diagnose: channel %d, %d clamped cdf value(s)\n", channel,
                 resid.n_clamped);
  return 0;
}

int run_bench(const CommonArgs& args, const json& cfg) {
  std::uint64_t seed = args.seed.value_or(cfg.value("seed", 1));
  ExperimentPlan plan;
  plan.scenario = scenario_from_json(cfg, seed);
  plan.replicates = cfg.value("replicates", 100);
  // reference protocol: 150 starts, 2-5 states (2-4 for the short scenarios)
  bool short_scenario = plan.scenario.id == "s9" || plan.scenario.id == "s10";
  plan.n_range = cfg.contains("n_range")
                     ? n_range_from_json(cfg)
                     : (short_scenario ? std::vector<int>{2, 3, 4} : std::vector<int>{2, 3, 4, 5});
  plan.family = family_from_json(cfg, {"gamma"});
  plan.workers = args.workers.value_or(cfg.value("workers", 1));
  plan.criteria.fit = fit_config_from_json(cfg, seed, 1);
  plan.criteria.fit.n_starts = cfg.value("starts", 150);
  plan.criteria.nested_starts = cfg.value("nested_starts", true);

  ensure_directory(args.out_dir);
  ExperimentResult result;
  if (cfg.contains("from_records")) {
    result.records = read_records(cfg.at("from_records").get<std::string>());
    result.selection = selection_from_records(result.records, plan.n_range);
    ScenarioConfig truth_cfg = plan.scenario;
    truth_cfg.T = 2;  // only the truth metadata is needed
    truth_cfg.n_tracks = 1;
    result.truth = generate(truth_cfg).truth;
    result.bias = bias_summary(result.records, result.truth);
  } else {
    result = run_experiment(plan);
  }
  write_records(result.records, path_join(args.out_dir, "records.jsonl"));
  write_selection_csv(result.selection, path_join(args.out_dir, "selection.csv"));
  write_bias_csv(result.bias, path_join(args.out_dir, "bias.csv"));
  write_experiment_summary(result, plan, path_join(args.out_dir, "summary.txt"));
  write_manifest("bench", seed, cfg, args.out_dir);
  if (!args.quiet) {
    std::fprintf(stderr, "bench %s: R=%d done; selection:\n", plan.scenario.id.c_str(),
                 plan.replicates);
    for (const auto& [criterion, counts] : result.selection.counts) {
      std::fprintf(stderr, "  %s:", criterion.c_str());
      for (std::size_t i = 0; i < counts.size(); ++i)
        std::fprintf(stderr, " N%d=%.0f%%", plan.n_range[i],
                     result.selection.percentage(criterion, plan.n_range[i]));
      std::fprintf(stderr, "\n");
    }
  }
  return 0;
}

int run_movement(const CommonArgs& args, const json& cfg) {
  std::uint64_t seed = args.seed.value_or(cfg.value("seed", 1));
  ensure_directory(args.out_dir);
  std::vector<Track> tracks;
  if (cfg.contains("synthesize")) {
    const json& sj = cfg.at("synthesize");
    HmmSpec model = sj.contains("model_file") ? read_model(sj.at("model_file").get<std::string>())
                                              : model_from_json(sj.at("model"));
    std::vector<int> lengths = sj.at("lengths").get<std::vector<int>>();
    long long interval = sj.value("interval_seconds", 3600LL);
    RandomStream rng(derive_seed(seed, 0xfeed));
    tracks = synthesize_tracks(model, lengths, interval, rng);
    write_tracks(tracks, path_join(args.out_dir, "tracks.tsv"));
  } else {
    tracks = ingest_tracks(cfg.at("tracks").get<std::string>());
  }
  PipelineConfig pc;
  pc.n_range = n_range_from_json(cfg);
  pc.criteria.fit = fit_config_from_json(cfg, seed, args.workers.value_or(cfg.value("workers", 1)));
  pc.criteria.fit.n_starts = cfg.value("starts", 50);
  pc.criteria.nested_starts = cfg.value("nested_starts", true);
  pc.max_lag = cfg.value("max_lag", 120);
  pc.residual_seed = derive_seed(seed, 0xd1a6);
  PipelineReport report = case_study_pipeline(tracks, pc);
  write_pipeline_report(report, args.out_dir);
  write_manifest("movement", seed, cfg, args.out_dir);
  if (!args.quiet) {
    for (const auto& [criterion, n] : report.criteria.winners)
      std::fprintf(stderr, "movement: %s -> N=%d\n", criterion.c_str(), n);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hmmsel: hidden-Markov-model order-selection laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  std::uint64_t seed_flag = 0;
  int workers_flag = 0;
  int (*handler)(const CommonArgs&, const json&) = nullptr;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "JSON config file")->required();
    sub->add_option("--out", args.out_dir, "output directory")->required();
    sub->add_option("--seed", seed_flag, "override the config seed")
        ->each([&](const std::string&) { args.seed = seed_flag; });
    sub->add_option("--workers", workers_flag, "worker thread count")
        ->each([&](const std::string&) { args.workers = workers_flag; });
    sub->add_flag("--quiet", args.quiet, "suppress progress output");
  };

  auto* simulate_cmd = app.add_subcommand("simulate", "generate scenario data");
  auto* fit_cmd = app.add_subcommand("fit", "fit one model by multi-start maximum likelihood");
  auto* select_cmd = app.add_subcommand("select", "fit a range of state counts and tabulate criteria");
  auto* diagnose_cmd = app.add_subcommand("diagnose", "pseudo-residual diagnostics for a fitted model");
  auto* bench_cmd = app.add_subcommand("bench", "replicated selection/bias experiment");
  auto* movement_cmd = app.add_subcommand("movement", "track ingestion and case-study pipeline");
  for (auto* sub : {simulate_cmd, fit_cmd, select_cmd, diagnose_cmd, bench_cmd, movement_cmd})
    add_common(sub);
  simulate_cmd->callback([&] { handler = run_simulate; });
  fit_cmd->callback([&] { handler = run_fit; });
  select_cmd->callback([&] { handler = run_select; });
  diagnose_cmd->callback([&] { handler = run_diagnose; });
  bench_cmd->callback([&] { handler = run_bench; });
  movement_cmd->callback([&] { handler = run_movement; });

  CLI11_PARSE(app, argc, argv);

  try {
    json cfg = load_config(args.config_path);
    return handler(args, cfg);
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    err["command"] = app.get_subcommands().empty() ? "" : app.get_subcommands()[0]->get_name();
    std::cerr << err.dump() << std::endl;
    return 1;
  }
}
