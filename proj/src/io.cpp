#include "hmmsel/io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "hmmsel/util.hpp"

namespace hmmsel {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kVersion = "0.1.0";

std::string na_or(double v) { return std::isnan(v) ? "NA" : format_double(v); }

double parse_value(const std::string& s, long line_no) {
  if (s == "NA") return kNaN;
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("dataset line " + std::to_string(line_no) + ": bad value '" + s +
                             "'");
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

// json numbers: keep doubles finite; NaN encodes as null.
json num(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double num_from(const json& j) { return j.is_null() ? kNaN : j.get<double>(); }

}  // namespace

std::string path_join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// dataset

void write_dataset(const ObservationSeries& series, const StateSequence* states,
                   const std::string& path) {
  series.validate();
  std::ofstream out = open_out(path);
  out << "# hmmsel dataset v1\n";
  const int nc = series.n_channels();
  bool has_labels = false;
  for (const auto& tr : series.tracks) has_labels = has_labels || !tr.time_labels.empty();
  out << "track\tslot";
  for (int c = 0; c < nc; ++c) out << "\tch" << c;
  out << "\tstate";
  if (has_labels) out << "\tlabel";
  out << "\n";
  for (std::size_t k = 0; k < series.tracks.size(); ++k) {
    const ObsTrack& tr = series.tracks[k];
    for (int t = 0; t < tr.n_slots; ++t) {
      out << k << '\t' << t;
      for (int c = 0; c < nc; ++c) out << '\t' << na_or(tr.at(t, c));
      if (states != nullptr && k < states->tracks.size())
        out << '\t' << states->tracks[k][t];
      else
        out << "\tNA";
      if (has_labels) {
        if (!tr.time_labels.empty())
          out << '\t' << tr.time_labels[t];
        else
          out << "\tNA";
      }
      out << '\n';
    }
  }
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  long line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string f;
    while (ss >> f) header.push_back(f);
    break;
  }
  if (header.size() < 3 || header[0] != "track" || header[1] != "slot")
    throw std::runtime_error("dataset: expected header 'track slot ch0 ... [state] [label]'");
  int nc = 0;
  bool has_state = false, has_label = false;
  for (std::size_t i = 2; i < header.size(); ++i) {
    if (header[i] == "state")
      has_state = true;
    else if (header[i] == "label")
      has_label = true;
    else if (header[i] == "ch" + std::to_string(nc))
      ++nc;
    else
      throw std::runtime_error("dataset: unexpected column '" + header[i] + "'");
  }
  if (nc == 0) throw std::runtime_error("dataset: no channel columns");

  Dataset out;
  StateSequence states;
  bool any_state = false;
  long prev_track = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<std::string> f;
    std::string field;
    while (ss >> field) f.push_back(field);
    if (f.size() != header.size())
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": wrong field count");
    long track = std::stol(f[0]);
    if (track != prev_track) {
      if (track != prev_track + 1)
        throw std::runtime_error("dataset line " + std::to_string(line_no) +
                                 ": track ids must be consecutive from 0");
      out.series.tracks.emplace_back();
      out.series.tracks.back().n_channels = nc;
      states.tracks.emplace_back();
      prev_track = track;
    }
    ObsTrack& tr = out.series.tracks.back();
    long slot = std::stol(f[1]);
    if (slot != tr.n_slots)
      throw std::runtime_error("dataset line " + std::to_string(line_no) +
                               ": slots must be consecutive from 0");
    for (int c = 0; c < nc; ++c) tr.values.push_back(parse_value(f[2 + c], line_no));
    std::size_t idx = 2 + nc;
    if (has_state) {
      if (f[idx] == "NA") {
        states.tracks.back().push_back(0);
      } else {
        states.tracks.back().push_back(static_cast<int>(std::stol(f[idx])));
        any_state = true;
      }
      ++idx;
    }
    if (has_label) {
      if (f[idx] != "NA") tr.time_labels.push_back(static_cast<int>(std::stol(f[idx])));
    }
    ++tr.n_slots;
  }
  if (out.series.tracks.empty()) throw std::runtime_error("dataset: no rows in " + path);
  for (auto& tr : out.series.tracks) {
    if (!tr.time_labels.empty() && static_cast<int>(tr.time_labels.size()) != tr.n_slots)
      throw std::runtime_error("dataset: partial label column");
  }
  out.series.validate();
  if (any_state) out.states = std::move(states);
  return out;
}

// ---------------------------------------------------------------------------
// distributions and models

json distribution_to_json(const Distribution& d) {
  json j;
  j["family"] = family_name(d);
  if (const auto* g = std::get_if<Gamma>(&d)) {
    j["mean"] = g->mean;
    j["shape"] = g->shape;
  } else if (const auto* v = std::get_if<VonMises>(&d)) {
    j["location"] = v->location;
    j["concentration"] = v->concentration;
  } else if (const auto* z = std::get_if<ZeroInflatedGamma>(&d)) {
    j["zero_mass"] = z->zero_mass;
    j["mean"] = z->mean;
    j["shape"] = z->shape;
  } else if (const auto* m = std::get_if<GammaMixture>(&d)) {
    j["weights"] = m->weights;
    json comps = json::array();
    for (const auto& c : m->components) comps.push_back({{"mean", c.mean}, {"shape", c.shape}});
    j["components"] = comps;
  } else if (const auto* s = std::get_if<SplineDensity>(&d)) {
    j["knots"] = s->knots;
    j["coefficients"] = s->coefficients;
  } else if (const auto* l = std::get_if<LogNormal>(&d)) {
    j["log_mean"] = l->log_mean;
    j["log_sd"] = l->log_sd;
  } else if (const auto* p = std::get_if<PoissonDwell>(&d)) {
    j["mean"] = p->mean;
    j["truncated"] = p->truncated;
  } else if (const auto* u = std::get_if<Uniform>(&d)) {
    j["lo"] = u->lo;
    j["hi"] = u->hi;
  }
  return j;
}

Distribution distribution_from_json(const json& j) {
  const std::string family = j.at("family").get<std::string>();
  if (family == "gamma") return Gamma(j.at("mean"), j.at("shape"));
  if (family == "von_mises") return VonMises(j.at("location"), j.at("concentration"));
  if (family == "zero_inflated_gamma")
    return ZeroInflatedGamma(j.at("zero_mass"), j.at("mean"), j.at("shape"));
  if (family == "gamma_mixture") {
    std::vector<double> weights = j.at("weights").get<std::vector<double>>();
    std::vector<Gamma> comps;
    for (const auto& c : j.at("components")) comps.push_back(Gamma(c.at("mean"), c.at("shape")));
    return GammaMixture(std::move(weights), std::move(comps));
  }
  if (family == "spline_density")
    return SplineDensity(j.at("knots").get<std::vector<double>>(),
                         j.at("coefficients").get<std::vector<double>>());
  if (family == "log_normal") return LogNormal(j.at("log_mean"), j.at("log_sd"));
  if (family == "poisson_dwell") return PoissonDwell(j.at("mean"), j.value("truncated", false));
  if (family == "uniform") return Uniform(j.at("lo"), j.at("hi"));
  throw std::runtime_error("unknown distribution family '" + family + "'");
}

json model_to_json(const HmmSpec& model) {
  json j;
  j["schema"] = "hmmsel-model#1";
  j["n_states"] = model.n_states;
  j["tpm"] = model.tpm;
  j["init"] = model.init == InitMode::Stationary ? "stationary" : "fixed";
  if (model.init == InitMode::Fixed) j["init_probs"] = model.init_probs;
  json channels = json::array();
  for (const auto& channel : model.channels) {
    json states = json::array();
    for (const auto& d : channel) states.push_back(distribution_to_json(d));
    channels.push_back(states);
  }
  j["channels"] = channels;
  return j;
}

HmmSpec model_from_json(const json& j) {
  HmmSpec model;
  model.n_states = j.at("n_states").get<int>();
  model.tpm = j.at("tpm").get<Tpm>();
  std::string init = j.at("init").get<std::string>();
  if (init == "stationary") {
    model.init = InitMode::Stationary;
  } else if (init == "fixed") {
    model.init = InitMode::Fixed;
    model.init_probs = j.at("init_probs").get<std::vector<double>>();
  } else {
    throw std::runtime_error("model: unknown init mode '" + init + "'");
  }
  for (const auto& channel : j.at("channels")) {
    std::vector<Distribution> states;
    for (const auto& d : channel) states.push_back(distribution_from_json(d));
    model.channels.push_back(std::move(states));
  }
  model.validate();
  return model;
}

void write_model(const HmmSpec& model, const std::string& path) {
  std::ofstream out = open_out(path);
  out << model_to_json(model).dump(2) << "\n";
}

HmmSpec read_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j = json::parse(in);
  return model_from_json(j);
}

json fit_result_to_json(const FitResult& fr) {
  json j;
  j["schema"] = "hmmsel-fit#1";
  j["model"] = model_to_json(fr.best_model);
  j["log_lik"] = fr.log_lik;
  j["n_params"] = fr.n_params;
  j["data_size"] = fr.data_size;
  json starts = json::array();
  for (const auto& s : fr.starts) {
    starts.push_back({{"seed", s.seed},
                      {"converged", s.converged},
                      {"boundary", s.boundary},
                      {"log_lik", num(s.log_lik)},
                      {"iterations", s.iterations}});
  }
  j["starts"] = starts;
  return j;
}

FitResult fit_result_from_json(const json& j) {
  FitResult fr;
  fr.best_model = model_from_json(j.at("model"));
  fr.log_lik = j.at("log_lik").get<double>();
  fr.n_params = j.at("n_params").get<int>();
  fr.data_size = j.at("data_size").get<long>();
  for (const auto& s : j.at("starts")) {
    StartRecord rec;
    rec.seed = s.at("seed").get<std::uint64_t>();
    rec.converged = s.at("converged").get<bool>();
    rec.boundary = s.at("boundary").get<bool>();
    rec.log_lik = num_from(s.at("log_lik"));
    rec.iterations = s.at("iterations").get<int>();
    fr.starts.push_back(rec);
  }
  return fr;
}

// ---------------------------------------------------------------------------
// criteria csv

void write_criteria_csv(const std::vector<CriteriaRow>& rows, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "n_states,n_params,log_lik,complete_data_log_lik,aic,bic,icl,status\n";
  for (const auto& r : rows) {
    out << r.n_states << ',' << r.n_params << ',';
    if (r.fit_ok) {
      out << format_double(r.log_lik) << ',' << format_double(r.complete_data_log_lik) << ','
          << format_double(r.aic) << ',' << format_double(r.bic) << ','
          << (r.icl ? format_double(*r.icl) : std::string("NA")) << ",ok\n";
    } else {
      out << "NA,NA,NA,NA,NA,failed\n";
    }
  }
}

// ---------------------------------------------------------------------------
// experiment records

json record_to_json(const ReplicateRecord& rec) {
  json j;
  j["replicate"] = rec.replicate;
  j["n_states"] = rec.n_states;
  j["ok"] = rec.ok;
  if (!rec.ok) j["error"] = rec.error;
  j["T"] = rec.T;
  j["n_params"] = rec.n_params;
  j["log_lik"] = num(rec.log_lik);
  j["complete_data_log_lik"] = num(rec.complete_data_log_lik);
  j["aic"] = num(rec.aic);
  j["bic"] = num(rec.bic);
  j["icl"] = rec.icl ? json(*rec.icl) : json(nullptr);
  j["means"] = rec.means;
  j["shapes"] = rec.shapes;
  if (!rec.zero_masses.empty()) j["zero_masses"] = rec.zero_masses;
  j["n_starts"] = rec.n_starts;
  j["n_converged"] = rec.n_converged;
  j["n_boundary"] = rec.n_boundary;
  return j;
}

ReplicateRecord record_from_json(const json& j) {
  ReplicateRecord rec;
  rec.replicate = j.at("replicate").get<int>();
  rec.n_states = j.at("n_states").get<int>();
  rec.ok = j.at("ok").get<bool>();
  rec.error = j.value("error", "");
  rec.T = j.at("T").get<long>();
  rec.n_params = j.at("n_params").get<int>();
  rec.log_lik = num_from(j.at("log_lik"));
  rec.complete_data_log_lik = num_from(j.at("complete_data_log_lik"));
  rec.aic = num_from(j.at("aic"));
  rec.bic = num_from(j.at("bic"));
  if (!j.at("icl").is_null()) rec.icl = j.at("icl").get<double>();
  rec.means = j.at("means").get<std::vector<double>>();
  rec.shapes = j.at("shapes").get<std::vector<double>>();
  if (j.contains("zero_masses"))
    rec.zero_masses = j.at("zero_masses").get<std::vector<double>>();
  rec.n_starts = j.at("n_starts").get<int>();
  rec.n_converged = j.at("n_converged").get<int>();
  rec.n_boundary = j.at("n_boundary").get<int>();
  return rec;
}

void write_records(const std::vector<ReplicateRecord>& records, const std::string& path) {
  std::ofstream out = open_out(path);
  for (const auto& rec : records) out << record_to_json(rec).dump() << "\n";
}

std::vector<ReplicateRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<ReplicateRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(record_from_json(json::parse(line)));
  }
  return records;
}

void write_selection_csv(const SelectionTable& table, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "criterion";
  for (int n : table.n_range) out << ",N" << n;
  out << ",excluded\n";
  for (const auto& [criterion, counts] : table.counts) {
    out << criterion;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      char buf[32];
      double pct = table.replicates > 0
                       ? 100.0 * static_cast<double>(counts[i]) / table.replicates
                       : 0.0;
      std::snprintf(buf, sizeof(buf), ",%.1f", pct);
      out << buf;
    }
    out << ',' << table.excluded.at(criterion) << "\n";
  }
}

void write_bias_csv(const BiasTable& table, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "n_states,parameter,true_value,mean,sd,count\n";
  for (const auto& [n, entries] : table.by_n) {
    for (const auto& e : entries) {
      out << n << ',' << e.parameter << ',' << na_or(e.true_value) << ',' << na_or(e.mean) << ','
          << na_or(e.sd) << ',' << e.count << "\n";
    }
  }
}

void write_experiment_summary(const ExperimentResult& result, const ExperimentPlan& plan,
                              const std::string& path) {
  std::ofstream out = open_out(path);
  out << "scenario " << plan.scenario.id << ": " << result.truth.description << "\n";
  out << "replicates " << plan.replicates << ", T " << plan.scenario.T;
  if (plan.scenario.n_tracks > 1) out << " x " << plan.scenario.n_tracks << " tracks";
  out << ", starts " << plan.criteria.fit.n_starts << ", seed " << plan.scenario.seed << "\n\n";
  out << "selection (% of replicates):\n";
  out << "  criterion";
  for (int n : result.selection.n_range) out << "\tN=" << n;
  out << "\texcluded\n";
  for (const auto& [criterion, counts] : result.selection.counts) {
    out << "  " << criterion;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "\t%.1f",
                    result.selection.replicates > 0
                        ? 100.0 * static_cast<double>(counts[i]) / result.selection.replicates
                        : 0.0);
      out << buf;
    }
    out << '\t' << result.selection.excluded.at(criterion) << "\n";
  }
  out << "\nestimates (mean (sd) across replicates):\n";
  for (const auto& [n, entries] : result.bias.by_n) {
    out << "  " << n << "-state model:\n";
    for (const auto& e : entries) {
      out << "    " << e.parameter << ": " << na_or(e.mean);
      if (!std::isnan(e.sd)) out << " (" << na_or(e.sd) << ")";
      if (!std::isnan(e.true_value)) out << "  [true " << na_or(e.true_value) << "]";
      out << "\n";
    }
  }
  if (!result.warnings.empty()) {
    out << "\nwarnings:\n";
    for (const auto& w : result.warnings) out << "  " << w << "\n";
  }
}

// ---------------------------------------------------------------------------
// movement report

void write_pipeline_report(const PipelineReport& report, const std::string& out_dir) {
  ensure_directory(out_dir);
  write_criteria_csv(report.criteria.rows, path_join(out_dir, "criteria.csv"));

  {
    std::ofstream out = open_out(path_join(out_dir, "decoded_states.tsv"));
    out << "n_states\ttrack\tslot\tstate\n";
    for (std::size_t i = 0; i < report.n_values.size(); ++i) {
      for (std::size_t k = 0; k < report.decoded[i].tracks.size(); ++k) {
        const auto& seq = report.decoded[i].tracks[k];
        for (std::size_t t = 0; t < seq.size(); ++t)
          out << report.n_values[i] << '\t' << k << '\t' << t << '\t' << seq[t] << "\n";
      }
    }
  }
  {
    std::ofstream out = open_out(path_join(out_dir, "density_curves.tsv"));
    out << "n_states\tstate\tchannel\tx\tweighted_pdf\n";
    for (const auto& curve : report.curves)
      for (const auto& [x, y] : curve.points)
        out << curve.n_states << '\t' << curve.state << '\t' << curve.channel << '\t'
            << format_double(x) << '\t' << format_double(y) << "\n";
  }
  {
    std::ofstream out = open_out(path_join(out_dir, "residual_qq.tsv"));
    out << "n_states\ttheoretical\tsample\n";
    for (std::size_t i = 0; i < report.n_values.size(); ++i)
      for (const auto& [q, z] : report.step_qq[i])
        out << report.n_values[i] << '\t' << format_double(q) << '\t' << format_double(z) << "\n";
  }
  {
    std::ofstream out = open_out(path_join(out_dir, "residual_acf.tsv"));
    out << "n_states\tlag\tacf\n";
    for (std::size_t i = 0; i < report.n_values.size(); ++i)
      for (std::size_t lag = 0; lag < report.step_acf[i].size(); ++lag)
        out << report.n_values[i] << '\t' << lag << '\t' << format_double(report.step_acf[i][lag])
            << "\n";
  }

  json summary;
  summary["schema"] = "hmmsel-movement-report#1";
  json rows = json::array();
  for (const auto& r : report.criteria.rows) {
    json row;
    row["n_states"] = r.n_states;
    row["n_params"] = r.n_params;
    row["ok"] = r.fit_ok;
    if (r.fit_ok) {
      row["log_lik"] = r.log_lik;
      row["aic"] = r.aic;
      row["bic"] = r.bic;
      row["icl"] = r.icl ? json(*r.icl) : json(nullptr);
    }
    rows.push_back(row);
  }
  summary["criteria"] = rows;
  summary["winners"] = report.criteria.winners;
  json occ = json::object();
  for (std::size_t i = 0; i < report.n_values.size(); ++i)
    occ[std::to_string(report.n_values[i])] = report.occupancy[i];
  summary["occupancy"] = occ;
  summary["warnings"] = report.criteria.warnings;
  std::ofstream out = open_out(path_join(out_dir, "summary.json"));
  out << summary.dump(2) << "\n";

  ensure_directory(path_join(out_dir, "models"));
  for (std::size_t i = 0; i < report.n_values.size(); ++i) {
    for (std::size_t r = 0; r < report.criteria.rows.size(); ++r) {
      if (report.criteria.rows[r].fit_ok &&
          report.criteria.rows[r].n_states == report.n_values[i]) {
        write_model(report.criteria.fits[r].best_model,
                    path_join(out_dir, "models/model_" + std::to_string(report.n_values[i]) +
                                           ".json"));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// manifest

void write_manifest(const std::string& command, std::uint64_t seed, const json& config,
                    const std::string& out_dir) {
  ensure_directory(out_dir);
  json manifest;
  manifest["schema"] = "hmmsel-manifest#1";
  manifest["version"] = kVersion;
  manifest["command"] = command;
  manifest["seed"] = seed;
  manifest["config"] = config;
  manifest["config_hash"] = to_hex(fnv1a64(config.dump()));
  std::ofstream out = open_out(path_join(out_dir, "manifest.json"));
  out << manifest.dump(2) << "\n";
}

}  // namespace hmmsel
