#include "hmmsel/movement.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "hmmsel/util.hpp"

namespace hmmsel {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Days since 1970-01-01 for a civil date (Howard Hinnant's algorithm).
long long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

void civil_from_days(long long z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

long long parse_iso_timestamp(const std::string& s, long line_no) {
  int y, mo, d, h, mi, se;
  if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &se) != 6)
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad timestamp '" + s + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 ||
      se > 60)
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad timestamp '" + s + "'");
  return days_from_civil(y, mo, d) * 86400LL + h * 3600LL + mi * 60LL + se;
}

std::string format_iso_timestamp(long long t) {
  long long days = t / 86400;
  long long rem = t % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  int y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lld", y, m, d, rem / 3600,
                (rem % 3600) / 60, rem % 60);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  if (line.find('\t') != std::string::npos) {
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, '\t')) out.push_back(field);
    if (!line.empty() && line.back() == '\t') out.push_back("");
  } else {
    std::istringstream ss(line);
    std::string field;
    while (ss >> field) out.push_back(field);
  }
  return out;
}

double parse_coord(const std::string& s, long line_no) {
  if (s.empty() || s == "NA" || s == "nan") return kNaN;
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad coordinate '" + s + "'");
  }
}

}  // namespace

std::vector<Track> ingest_tracks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingest_tracks: cannot open " + path);
  std::string line;
  long line_no = 0;

  // Header row declares the columns; the _m suffix declares meters.
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    header = split_fields(line);
    break;
  }
  if (header != std::vector<std::string>{"id", "timestamp", "x_m", "y_m"})
    throw std::runtime_error(
        "ingest_tracks: expected header 'id timestamp x_m y_m' (coordinates in meters)");

  struct RawRow {
    std::string id;
    long long time;
    double x, y;
    long line_no;
  };
  std::vector<RawRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f = split_fields(line);
    if (f.size() != 4)
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                               std::to_string(f.size()));
    RawRow r;
    r.id = f[0];
    r.time = parse_iso_timestamp(f[1], line_no);
    r.x = parse_coord(f[2], line_no);
    r.y = parse_coord(f[3], line_no);
    r.line_no = line_no;
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw std::runtime_error("ingest_tracks: no data rows in " + path);

  // Group rows by id, preserving file order within a track.
  std::vector<Track> tracks;
  std::vector<std::vector<RawRow>> grouped;
  for (auto& r : rows) {
    if (grouped.empty() || grouped.back().front().id != r.id) {
      for (const auto& g : grouped)
        if (g.front().id == r.id)
          throw std::runtime_error("line " + std::to_string(r.line_no) + ": track '" + r.id +
                                   "' appears in two separate blocks");
      grouped.emplace_back();
    }
    grouped.back().push_back(std::move(r));
  }

  // The base sampling interval is the smallest positive gap; every gap must
  // be an exact multiple of it. Larger multiples insert missing slots.
  long long base = 0;
  for (const auto& g : grouped) {
    for (std::size_t i = 1; i < g.size(); ++i) {
      long long dt = g[i].time - g[i - 1].time;
      if (dt <= 0)
        throw std::runtime_error("line " + std::to_string(g[i].line_no) +
                                 ": timestamps not strictly increasing");
      if (base == 0 || dt < base) base = dt;
    }
  }
  if (base == 0) throw std::runtime_error("ingest_tracks: tracks need at least 2 rows each");
  for (const auto& g : grouped) {
    Track tr;
    tr.id = g.front().id;
    tr.interval_seconds = base;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (i > 0) {
        long long dt = g[i].time - g[i - 1].time;
        if (dt % base != 0)
          throw std::runtime_error("line " + std::to_string(g[i].line_no) +
                                   ": timestamp offset is not a multiple of the sampling "
                                   "interval (" +
                                   std::to_string(base) + " s)");
        for (long long k = 1; k < dt / base; ++k) {
          tr.timestamps.push_back(g[i - 1].time + k * base);
          tr.x.push_back(kNaN);
          tr.y.push_back(kNaN);
        }
      }
      tr.timestamps.push_back(g[i].time);
      tr.x.push_back(g[i].x);
      tr.y.push_back(g[i].y);
    }
    tracks.push_back(std::move(tr));
  }
  return tracks;
}

void write_tracks(const std::vector<Track>& tracks, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_tracks: cannot write " + path);
  out << "# hmmsel tracks v1\n";
  out << "id\ttimestamp\tx_m\ty_m\n";
  for (const auto& tr : tracks) {
    for (std::size_t t = 0; t < tr.timestamps.size(); ++t) {
      out << tr.id << '\t' << format_iso_timestamp(tr.timestamps[t]) << '\t';
      if (std::isnan(tr.x[t]))
        out << "NA";
      else
        out << format_double(tr.x[t]);
      out << '\t';
      if (std::isnan(tr.y[t]))
        out << "NA";
      else
        out << format_double(tr.y[t]);
      out << '\n';
    }
  }
}

ObsTrack steps_and_turns(const Track& track) {
  const int T = static_cast<int>(track.timestamps.size());
  if (T < 2) throw std::invalid_argument("steps_and_turns: track needs at least 2 slots");
  ObsTrack out;
  out.n_slots = T - 1;
  out.n_channels = 2;
  out.values.assign(static_cast<std::size_t>(T - 1) * 2, kNaN);
  auto present = [&](int t) { return !std::isnan(track.x[t]) && !std::isnan(track.y[t]); };
  for (int t = 0; t + 1 < T; ++t) {
    if (present(t) && present(t + 1)) {
      double dx = track.x[t + 1] - track.x[t];
      double dy = track.y[t + 1] - track.y[t];
      out.at(t, 0) = std::hypot(dx, dy);
    }
    if (t >= 1 && present(t - 1) && present(t) && present(t + 1)) {
      double ux = track.x[t] - track.x[t - 1], uy = track.y[t] - track.y[t - 1];
      double vx = track.x[t + 1] - track.x[t], vy = track.y[t + 1] - track.y[t];
      double nu = std::hypot(ux, uy), nv = std::hypot(vx, vy);
      if (nu > 0.0 && nv > 0.0) {
        double cross = ux * vy - uy * vx;  // counterclockwise positive
        double dot = ux * vx + uy * vy;
        double angle = std::atan2(cross, dot);
        if (angle <= -kPi) angle = kPi;
        out.at(t, 1) = angle;
      }
    }
  }
  return out;
}

ObservationSeries move_series(const std::vector<Track>& tracks) {
  if (tracks.empty()) throw std::invalid_argument("move_series: no tracks");
  ObservationSeries series;
  for (const auto& tr : tracks) series.tracks.push_back(steps_and_turns(tr));
  return series;
}

HmmSpec movement_template(int n_states) {
  return make_template({EmissionKind::ZeroInflatedGamma, EmissionKind::VonMises}, n_states);
}

PipelineReport case_study_pipeline(const std::vector<Track>& tracks,
                                   const PipelineConfig& config) {
  ObservationSeries series = move_series(tracks);
  PipelineReport report;
  report.criteria = criteria_table(series, {EmissionKind::ZeroInflatedGamma,
                                            EmissionKind::VonMises},
                                   config.n_range, config.criteria);

  // Grid bounds for the density curves.
  std::vector<double> steps;
  for (const auto& tr : series.tracks)
    for (int t = 0; t < tr.n_slots; ++t)
      if (!tr.missing(t, 0) && tr.at(t, 0) > 0.0) steps.push_back(tr.at(t, 0));
  std::sort(steps.begin(), steps.end());
  double step_hi = steps.empty() ? 1.0 : steps[static_cast<std::size_t>(0.995 * (steps.size() - 1))];

  for (std::size_t i = 0; i < report.criteria.rows.size(); ++i) {
    if (!report.criteria.rows[i].fit_ok) continue;
    const FitResult& fr = report.criteria.fits[i];
    const int n = fr.best_model.n_states;
    report.n_values.push_back(n);

    StateSequence decoded = viterbi(fr.best_model, series);
    std::vector<double> occupancy(n, 0.0);
    long total = 0;
    for (const auto& seq : decoded.tracks)
      for (int s : seq) {
        occupancy[s - 1] += 1.0;
        ++total;
      }
    for (double& o : occupancy) o /= static_cast<double>(total);

    for (int s = 0; s < n; ++s) {
      DensityCurve step_curve;
      step_curve.n_states = n;
      step_curve.state = s + 1;
      step_curve.channel = 0;
      for (int g = 0; g < config.density_grid; ++g) {
        double x = (g + 0.5) * step_hi / config.density_grid;
        double pdf = std::exp(log_pdf(fr.best_model.channels[0][s], x));
        step_curve.points.emplace_back(x, occupancy[s] * pdf);
      }
      report.curves.push_back(std::move(step_curve));

      DensityCurve angle_curve;
      angle_curve.n_states = n;
      angle_curve.state = s + 1;
      angle_curve.channel = 1;
      for (int g = 0; g < config.density_grid; ++g) {
        double x = -kPi + (g + 0.5) * 2.0 * kPi / config.density_grid;
        double pdf = std::exp(log_pdf(fr.best_model.channels[1][s], x));
        angle_curve.points.emplace_back(x, occupancy[s] * pdf);
      }
      report.curves.push_back(std::move(angle_curve));
    }

    RandomStream rng(derive_seed(config.residual_seed, static_cast<std::uint64_t>(n)));
    ResidualSeries resid = pseudo_residuals(fr.best_model, series, 0, rng);
    int shortest = std::numeric_limits<int>::max();
    for (const auto& tr : series.tracks) shortest = std::min(shortest, tr.n_slots);
    int max_lag = std::min(config.max_lag, shortest - 1);
    report.step_qq.push_back(qq_points(resid));
    report.step_acf.push_back(acf(resid, max_lag));
    report.decoded.push_back(std::move(decoded));
    report.occupancy.push_back(std::move(occupancy));
  }
  return report;
}

std::vector<Track> synthesize_tracks(const HmmSpec& model, const std::vector<int>& lengths,
                                     long long interval_seconds, RandomStream& rng) {
  model.validate();
  if (model.n_channels() != 2)
    throw std::invalid_argument("synthesize_tracks: model needs (step, angle) channels");
  auto [series, states] = simulate(model, lengths, rng);
  (void)states;
  std::vector<Track> tracks;
  long long t0 = days_from_civil(2020, 1, 1) * 86400LL;
  for (std::size_t k = 0; k < series.tracks.size(); ++k) {
    const ObsTrack& mv = series.tracks[k];
    Track tr;
    tr.id = "sim" + std::to_string(k);
    tr.interval_seconds = interval_seconds;
    double heading = rng.uniform(-kPi, kPi);
    double x = 0.0, y = 0.0;
    tr.timestamps.push_back(t0);
    tr.x.push_back(x);
    tr.y.push_back(y);
    for (int t = 0; t < mv.n_slots; ++t) {
      heading += mv.at(t, 1);
      double step = mv.at(t, 0);
      x += step * std::cos(heading);
      y += step * std::sin(heading);
      tr.timestamps.push_back(t0 + (t + 1) * interval_seconds);
      tr.x.push_back(x);
      tr.y.push_back(y);
    }
    tracks.push_back(std::move(tr));
  }
  return tracks;
}

}  // namespace hmmsel
