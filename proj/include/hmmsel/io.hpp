#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hmmsel/bench.hpp"
#include "hmmsel/model.hpp"
#include "hmmsel/movement.hpp"
#include "hmmsel/scenarios.hpp"

namespace hmmsel {

// ---- dataset: columnar text (track, slot, channel values, state, label) ----

struct Dataset {
  ObservationSeries series;
  std::optional<StateSequence> states;
};

void write_dataset(const ObservationSeries& series, const StateSequence* states,
                   const std::string& path);
Dataset read_dataset(const std::string& path);

// ---- models and fit results (JSON) ----

nlohmann::json distribution_to_json(const Distribution& d);
Distribution distribution_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const HmmSpec& model);
HmmSpec model_from_json(const nlohmann::json& j);
void write_model(const HmmSpec& model, const std::string& path);
HmmSpec read_model(const std::string& path);

nlohmann::json fit_result_to_json(const FitResult& fr);
FitResult fit_result_from_json(const nlohmann::json& j);

// ---- criteria tables (CSV rows) ----

void write_criteria_csv(const std::vector<CriteriaRow>& rows, const std::string& path);

// ---- experiment records and tables ----

nlohmann::json record_to_json(const ReplicateRecord& rec);
ReplicateRecord record_from_json(const nlohmann::json& j);
void write_records(const std::vector<ReplicateRecord>& records, const std::string& path);
std::vector<ReplicateRecord> read_records(const std::string& path);

void write_selection_csv(const SelectionTable& table, const std::string& path);
void write_bias_csv(const BiasTable& table, const std::string& path);
void write_experiment_summary(const ExperimentResult& result, const ExperimentPlan& plan,
                              const std::string& path);

// ---- movement pipeline report bundle ----

void write_pipeline_report(const PipelineReport& report, const std::string& out_dir);

// ---- run manifest ----

// Every CLI run writes manifest.json next to its outputs: schema version,
// subcommand, master seed, and an FNV-1a fingerprint of the resolved config.
void write_manifest(const std::string& command, std::uint64_t seed,
                    const nlohmann::json& config, const std::string& out_dir);

std::string path_join(const std::string& dir, const std::string& name);
void ensure_directory(const std::string& dir);

}  // namespace hmmsel
