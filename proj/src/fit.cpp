#include "hmmsel/fit.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/digamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hmmsel/optim.hpp"
#include "hmmsel/util.hpp"

namespace hmmsel {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPenaltyWeight = 1000.0;

enum class WKind {
  TpmLogit,
  GammaLogMean,
  GammaLogShape,
  ZigLogitZero,
  ZigLogMean,
  ZigLogShape,
  VmLocation,
  VmLogConc,
  LnMean,
  LnLogSd,
};

struct WParam {
  WKind kind;
  int row = -1, col = -1;     // TpmLogit
  int channel = -1, state = -1;
};

std::vector<WParam> working_layout(const HmmSpec& templ) {
  std::vector<WParam> layout;
  const int n = templ.n_states;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) layout.push_back({WKind::TpmLogit, i, j, -1, -1});
  for (int c = 0; c < templ.n_channels(); ++c) {
    for (int s = 0; s < n; ++s) {
      const Distribution& d = templ.channels[c][s];
      if (std::get_if<Gamma>(&d)) {
        layout.push_back({WKind::GammaLogMean, -1, -1, c, s});
        layout.push_back({WKind::GammaLogShape, -1, -1, c, s});
      } else if (std::get_if<ZeroInflatedGamma>(&d)) {
        layout.push_back({WKind::ZigLogitZero, -1, -1, c, s});
        layout.push_back({WKind::ZigLogMean, -1, -1, c, s});
        layout.push_back({WKind::ZigLogShape, -1, -1, c, s});
      } else if (std::get_if<VonMises>(&d)) {
        layout.push_back({WKind::VmLocation, -1, -1, c, s});
        layout.push_back({WKind::VmLogConc, -1, -1, c, s});
      } else if (std::get_if<LogNormal>(&d)) {
        layout.push_back({WKind::LnMean, -1, -1, c, s});
        layout.push_back({WKind::LnLogSd, -1, -1, c, s});
      } else {
        throw std::invalid_argument("fit: emission family '" + family_name(d) +
                                    "' is not supported by the optimizer");
      }
    }
  }
  return layout;
}

double logit(double p) { return std::log(p / (1.0 - p)); }
double inv_logit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? kPi : a;
}

}  // namespace

std::vector<double> to_working(const HmmSpec& model) {
  model.validate();
  std::vector<WParam> layout = working_layout(model);
  std::vector<double> w;
  w.reserve(layout.size());
  for (const WParam& p : layout) {
    switch (p.kind) {
      case WKind::TpmLogit: {
        double diag = model.tpm[p.row][p.row];
        double off = model.tpm[p.row][p.col];
        if (!(diag > 0.0) || !(off > 0.0))
          throw std::invalid_argument("to_working: tpm entries must be interior (positive)");
        w.push_back(std::log(off / diag));
        break;
      }
      case WKind::GammaLogMean:
        w.push_back(std::log(std::get<Gamma>(model.channels[p.channel][p.state]).mean));
        break;
      case WKind::GammaLogShape:
        w.push_back(std::log(std::get<Gamma>(model.channels[p.channel][p.state]).shape));
        break;
      case WKind::ZigLogitZero: {
        double z = std::get<ZeroInflatedGamma>(model.channels[p.channel][p.state]).zero_mass;
        if (!(z > 0.0 && z < 1.0))
          throw std::invalid_argument("to_working: zero_mass must be interior");
        w.push_back(logit(z));
        break;
      }
      case WKind::ZigLogMean:
        w.push_back(std::log(std::get<ZeroInflatedGamma>(model.channels[p.channel][p.state]).mean));
        break;
      case WKind::ZigLogShape:
        w.push_back(
            std::log(std::get<ZeroInflatedGamma>(model.channels[p.channel][p.state]).shape));
        break;
      case WKind::VmLocation:
        w.push_back(std::get<VonMises>(model.channels[p.channel][p.state]).location);
        break;
      case WKind::VmLogConc: {
        double k = std::get<VonMises>(model.channels[p.channel][p.state]).concentration;
        if (!(k > 0.0))
          throw std::invalid_argument("to_working: concentration must be interior (positive)");
        w.push_back(std::log(k));
        break;
      }
      case WKind::LnMean:
        w.push_back(std::get<LogNormal>(model.channels[p.channel][p.state]).log_mean);
        break;
      case WKind::LnLogSd:
        w.push_back(std::log(std::get<LogNormal>(model.channels[p.channel][p.state]).log_sd));
        break;
    }
  }
  return w;
}

HmmSpec from_working(const std::vector<double>& w, const HmmSpec& templ) {
  std::vector<WParam> layout = working_layout(templ);
  if (w.size() != layout.size())
    throw std::invalid_argument("from_working: vector length mismatch");
  const int n = templ.n_states;
  HmmSpec out = templ;

  // Transition matrix rows via multinomial logit with the diagonal as
  // reference class.
  std::vector<std::vector<double>> logits(n, std::vector<double>(n, 0.0));
  std::size_t idx = 0;
  for (const WParam& p : layout) {
    if (p.kind == WKind::TpmLogit) logits[p.row][p.col] = w[idx];
    ++idx;
  }
  for (int i = 0; i < n; ++i) {
    double m = 0.0;
    for (int j = 0; j < n; ++j) m = std::max(m, logits[i][j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(logits[i][j] - m);
    for (int j = 0; j < n; ++j) out.tpm[i][j] = std::exp(logits[i][j] - m) / z;
  }

  idx = 0;
  for (const WParam& p : layout) {
    double v = w[idx++];
    switch (p.kind) {
      case WKind::TpmLogit:
        break;
      case WKind::GammaLogMean: {
        auto& d = std::get<Gamma>(out.channels[p.channel][p.state]);
        d = Gamma(std::exp(v), d.shape);
        break;
      }
      case WKind::GammaLogShape: {
        auto& d = std::get<Gamma>(out.channels[p.channel][p.state]);
        d = Gamma(d.mean, std::exp(v));
        break;
      }
      case WKind::ZigLogitZero: {
        auto& d = std::get<ZeroInflatedGamma>(out.channels[p.channel][p.state]);
        d = ZeroInflatedGamma(inv_logit(v), d.mean, d.shape);
        break;
      }
      case WKind::ZigLogMean: {
        auto& d = std::get<ZeroInflatedGamma>(out.channels[p.channel][p.state]);
        d = ZeroInflatedGamma(d.zero_mass, std::exp(v), d.shape);
        break;
      }
      case WKind::ZigLogShape: {
        auto& d = std::get<ZeroInflatedGamma>(out.channels[p.channel][p.state]);
        d = ZeroInflatedGamma(d.zero_mass, d.mean, std::exp(v));
        break;
      }
      case WKind::VmLocation: {
        auto& d = std::get<VonMises>(out.channels[p.channel][p.state]);
        d = VonMises(wrap_angle(v), d.concentration);
        break;
      }
      case WKind::VmLogConc: {
        auto& d = std::get<VonMises>(out.channels[p.channel][p.state]);
        d = VonMises(d.location, std::exp(v));
        break;
      }
      case WKind::LnMean: {
        auto& d = std::get<LogNormal>(out.channels[p.channel][p.state]);
        d = LogNormal(v, d.log_sd);
        break;
      }
      case WKind::LnLogSd: {
        auto& d = std::get<LogNormal>(out.channels[p.channel][p.state]);
        d = LogNormal(d.log_mean, std::exp(v));
        break;
      }
    }
  }
  return out;
}

int count_parameters(const HmmSpec& templ) {
  if (templ.init != InitMode::Stationary)
    throw std::invalid_argument(
        "count_parameters: requires a stationary initial distribution (delta implied by tpm)");
  const int n = templ.n_states;
  int p = n * (n - 1);
  for (const auto& channel : templ.channels)
    for (const auto& d : channel) p += n_free_params(d);
  return p;
}

namespace {

// ---------------------------------------------------------------------------
// Likelihood evaluation with analytic gradients in working coordinates.

struct ChannelCache {
  std::vector<double> sorted_positive;
  double zero_fraction = 0.0;
  double max_value = 1.0;
};

struct DataCache {
  const ObservationSeries* data = nullptr;
  std::vector<ChannelCache> channels;
  std::vector<std::vector<double>> log_values;  // per track, slot-major; NaN if unusable
  int max_slots = 0;

  explicit DataCache(const ObservationSeries& series) : data(&series) {
    series.validate();
    const int nc = series.n_channels();
    channels.resize(nc);
    std::vector<long> n_zero(nc, 0), n_obs(nc, 0);
    for (const auto& track : series.tracks) {
      max_slots = std::max(max_slots, track.n_slots);
      std::vector<double> lv(track.values.size(), std::numeric_limits<double>::quiet_NaN());
      for (int t = 0; t < track.n_slots; ++t) {
        for (int c = 0; c < nc; ++c) {
          double x = track.at(t, c);
          if (std::isnan(x)) continue;
          ++n_obs[c];
          if (x == 0.0) ++n_zero[c];
          if (x > 0.0) {
            channels[c].sorted_positive.push_back(x);
            lv[static_cast<std::size_t>(t) * nc + c] = std::log(x);
          }
          channels[c].max_value = std::max(channels[c].max_value, std::abs(x));
        }
      }
      log_values.push_back(std::move(lv));
    }
    for (int c = 0; c < nc; ++c) {
      std::sort(channels[c].sorted_positive.begin(), channels[c].sorted_positive.end());
      channels[c].zero_fraction =
          n_obs[c] > 0 ? static_cast<double>(n_zero[c]) / static_cast<double>(n_obs[c]) : 0.0;
    }
  }

  double quantile(int channel, double p) const {
    const auto& v = channels[channel].sorted_positive;
    if (v.empty()) return 1.0;
    double idx = p * static_cast<double>(v.size() - 1);
    return v[static_cast<std::size_t>(std::llround(idx))];
  }
};

enum class FamilyKind { Gamma, Zig, VonMises, LogNormal };

// Per (channel, state) natural parameters with per-evaluation constants.
struct PrepDist {
  FamilyKind kind;
  double p0 = 0, p1 = 0, p2 = 0;  // gamma: (mean, shape); zig: (zero, mean, shape);
                                  // vm: (loc, conc); ln: (log_mean, log_sd)
  double c_add = 0;               // additive log-density constant
  double rate = 0, log_rate = 0, digamma_shape = 0, bessel_ratio = 0;
  double log_zero = 0, log_nonzero = 0;
  int widx[3] = {-1, -1, -1};     // working-vector positions of the parameters
};

struct Workspace {
  std::vector<double> btilde, alphahat, ctilde, mshift;
  std::vector<double> beta, newbeta, post;
};

struct Objective {
  const DataCache& cache;
  const HmmSpec& templ;
  std::vector<WParam> layout;
  int n = 0, nc = 0;
  ParameterBounds bounds;
  // Per-working-parameter penalty box (in working coordinates); NaN = none.
  std::vector<double> box_lo, box_hi;

  mutable Workspace ws;

  Objective(const DataCache& cache_, const HmmSpec& templ_, const ParameterBounds& bounds_)
      : cache(cache_), templ(templ_), layout(working_layout(templ_)),
        n(templ_.n_states), nc(templ_.n_channels()), bounds(bounds_) {
    if (n > 8) throw std::invalid_argument("fit: at most 8 states supported");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    box_lo.assign(layout.size(), nan);
    box_hi.assign(layout.size(), nan);
    for (std::size_t i = 0; i < layout.size(); ++i) {
      switch (layout[i].kind) {
        case WKind::TpmLogit:
          box_lo[i] = -bounds.tpm_logit_cap;
          box_hi[i] = bounds.tpm_logit_cap;
          break;
        case WKind::GammaLogMean:
        case WKind::ZigLogMean:
          box_lo[i] = std::log(bounds.mean_lo);
          box_hi[i] =
              std::log(bounds.mean_hi_factor * cache.channels[layout[i].channel].max_value);
          break;
        case WKind::GammaLogShape:
        case WKind::ZigLogShape:
          box_lo[i] = std::log(bounds.shape_lo);
          box_hi[i] = std::log(bounds.shape_hi);
          break;
        case WKind::VmLogConc:
          box_lo[i] = std::log(bounds.conc_lo);
          box_hi[i] = std::log(bounds.conc_hi);
          break;
        default:
          break;  // location/logit parameters are unpenalized
      }
    }
  }

  bool decode(const std::vector<double>& w, std::vector<double>& tpm,
              std::vector<std::vector<PrepDist>>& prep) const {
    // tpm rows via multinomial logit
    std::size_t idx = 0;
    std::vector<double> logits(static_cast<std::size_t>(n) * n, 0.0);
    for (const WParam& p : layout) {
      if (p.kind == WKind::TpmLogit) {
        if (!std::isfinite(w[idx])) return false;
        logits[p.row * n + p.col] = w[idx];
      }
      ++idx;
    }
    for (int i = 0; i < n; ++i) {
      double m = 0.0;
      for (int j = 0; j < n; ++j) m = std::max(m, logits[i * n + j]);
      double z = 0.0;
      for (int j = 0; j < n; ++j) z += std::exp(logits[i * n + j] - m);
      for (int j = 0; j < n; ++j) tpm[i * n + j] = std::exp(logits[i * n + j] - m) / z;
    }
    // emissions
    prep.assign(nc, std::vector<PrepDist>(n));
    idx = 0;
    for (std::size_t li = 0; li < layout.size(); ++li) {
      const WParam& p = layout[li];
      if (p.kind == WKind::TpmLogit) continue;
      PrepDist& d = prep[p.channel][p.state];
      double v = w[li];
      if (!std::isfinite(v)) return false;
      switch (p.kind) {
        case WKind::GammaLogMean:
          d.kind = FamilyKind::Gamma;
          d.p0 = std::exp(v);
          d.widx[0] = static_cast<int>(li);
          break;
        case WKind::GammaLogShape:
          d.p1 = std::exp(v);
          d.widx[1] = static_cast<int>(li);
          break;
        case WKind::ZigLogitZero:
          d.kind = FamilyKind::Zig;
          d.p0 = inv_logit(v);
          d.widx[0] = static_cast<int>(li);
          break;
        case WKind::ZigLogMean:
          d.p1 = std::exp(v);
          d.widx[1] = static_cast<int>(li);
          break;
        case WKind::ZigLogShape:
          d.p2 = std::exp(v);
          d.widx[2] = static_cast<int>(li);
          break;
        case WKind::VmLocation:
          d.kind = FamilyKind::VonMises;
          d.p0 = v;
          d.widx[0] = static_cast<int>(li);
          break;
        case WKind::VmLogConc:
          d.p1 = std::exp(v);
          d.widx[1] = static_cast<int>(li);
          break;
        case WKind::LnMean:
          d.kind = FamilyKind::LogNormal;
          d.p0 = v;
          d.widx[0] = static_cast<int>(li);
          break;
        case WKind::LnLogSd:
          d.p1 = std::exp(v);
          d.widx[1] = static_cast<int>(li);
          break;
        default:
          break;
      }
    }
    // per-evaluation constants
    for (int c = 0; c < nc; ++c) {
      for (int s = 0; s < n; ++s) {
        PrepDist& d = prep[c][s];
        switch (d.kind) {
          case FamilyKind::Gamma: {
            double mean = d.p0, shape = d.p1;
            if (!(mean > 0) || !(shape > 0) || !std::isfinite(mean) || !std::isfinite(shape) ||
                shape > 1e12)
              return false;
            d.rate = shape / mean;
            d.log_rate = std::log(d.rate);
            d.c_add = shape * d.log_rate - std::lgamma(shape);
            d.digamma_shape = boost::math::digamma(shape);
            break;
          }
          case FamilyKind::Zig: {
            double zero = d.p0, mean = d.p1, shape = d.p2;
            if (!(mean > 0) || !(shape > 0) || !(zero > 0 && zero < 1) || shape > 1e12 ||
                !std::isfinite(mean) || !std::isfinite(shape))
              return false;
            d.rate = shape / mean;
            d.log_rate = std::log(d.rate);
            d.c_add = shape * d.log_rate - std::lgamma(shape);
            d.digamma_shape = boost::math::digamma(shape);
            d.log_zero = std::log(zero);
            d.log_nonzero = std::log1p(-zero);
            break;
          }
          case FamilyKind::VonMises: {
            double conc = d.p1;
            if (!(conc > 0) || conc > 650.0) return false;
            double i0 = boost::math::cyl_bessel_i(0.0, conc);
            double i1 = boost::math::cyl_bessel_i(1.0, conc);
            d.c_add = -std::log(2.0 * kPi * i0);
            d.bessel_ratio = i1 / i0;
            break;
          }
          case FamilyKind::LogNormal: {
            if (!(d.p1 > 0) || !std::isfinite(d.p0) || !std::isfinite(d.p1)) return false;
            d.c_add = -std::log(d.p1) - 0.5 * std::log(2.0 * kPi);
            break;
          }
        }
      }
    }
    return true;
  }

  // log p(x | state) for one channel value; logx is cached log(x) (NaN if x <= 0).
  double emission_logp(const PrepDist& d, double x, double logx) const {
    switch (d.kind) {
      case FamilyKind::Gamma:
        if (!(x > 0.0)) return -kInf;
        return d.c_add + (d.p1 - 1.0) * logx - d.rate * x;
      case FamilyKind::Zig:
        if (x == 0.0) return d.log_zero;
        if (!(x > 0.0)) return -kInf;
        return d.log_nonzero + d.c_add + (d.p2 - 1.0) * logx - d.rate * x;
      case FamilyKind::VonMises:
        return d.p1 * std::cos(x - d.p0) + d.c_add;
      case FamilyKind::LogNormal: {
        if (!(x > 0.0)) return -kInf;
        double z = (logx - d.p0) / d.p1;
        return d.c_add - logx - 0.5 * z * z;
      }
    }
    return -kInf;
  }

  // Adds weight * d(log p)/d(working params) into grad.
  void emission_grad(const PrepDist& d, double x, double logx, double weight,
                     std::vector<double>& grad) const {
    switch (d.kind) {
      case FamilyKind::Gamma: {
        double mean = d.p0, shape = d.p1;
        grad[d.widx[0]] += weight * shape * (x / mean - 1.0);
        grad[d.widx[1]] +=
            weight * shape * (d.log_rate + 1.0 - d.digamma_shape + logx - x / mean);
        break;
      }
      case FamilyKind::Zig: {
        double zero = d.p0, mean = d.p1, shape = d.p2;
        if (x == 0.0) {
          grad[d.widx[0]] += weight * (1.0 - zero);
        } else {
          grad[d.widx[0]] -= weight * zero;
          grad[d.widx[1]] += weight * shape * (x / mean - 1.0);
          grad[d.widx[2]] +=
              weight * shape * (d.log_rate + 1.0 - d.digamma_shape + logx - x / mean);
        }
        break;
      }
      case FamilyKind::VonMises: {
        double loc = d.p0, conc = d.p1;
        grad[d.widx[0]] += weight * conc * std::sin(x - loc);
        grad[d.widx[1]] += weight * conc * (std::cos(x - loc) - d.bessel_ratio);
        break;
      }
      case FamilyKind::LogNormal: {
        double z = (logx - d.p0) / d.p1;
        grad[d.widx[0]] += weight * z / d.p1;
        grad[d.widx[1]] += weight * (z * z - 1.0);
        break;
      }
    }
  }

  // Returns -log-likelihood (+ box penalty when `penalized`); writes the
  // gradient when grad != nullptr. +inf marks an unusable point.
  double operator()(const std::vector<double>& w, std::vector<double>* grad,
                    bool penalized = true) const {
    std::vector<double> tpm(static_cast<std::size_t>(n) * n);
    std::vector<std::vector<PrepDist>> prep;
    if (!decode(w, tpm, prep)) return kInf;

    std::vector<double> delta(n, 1.0);
    std::vector<double> m_solve;  // I - Gamma + U, for the stationary gradient
    if (n > 1) {
      Tpm rows(n, std::vector<double>(n));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) rows[i][j] = tpm[i * n + j];
      try {
        delta = stationary_distribution(rows);
      } catch (const std::exception&) {
        return kInf;
      }
    }

    const bool want_grad = grad != nullptr;
    std::vector<double> gtpm;     // d loglik / d gamma_ij (natural)
    std::vector<double> gdelta;   // d loglik / d delta_j
    if (want_grad) {
      grad->assign(w.size(), 0.0);
      gtpm.assign(static_cast<std::size_t>(n) * n, 0.0);
      gdelta.assign(n, 0.0);
    }

    double loglik = 0.0;
    ws.btilde.resize(static_cast<std::size_t>(cache.max_slots) * n);
    ws.alphahat.resize(static_cast<std::size_t>(cache.max_slots) * n);
    ws.ctilde.resize(cache.max_slots);
    ws.mshift.resize(cache.max_slots);
    ws.beta.resize(n);
    ws.newbeta.resize(n);
    ws.post.resize(n);

    for (std::size_t k = 0; k < cache.data->tracks.size(); ++k) {
      const ObsTrack& track = cache.data->tracks[k];
      const std::vector<double>& logx = cache.log_values[k];
      const int T = track.n_slots;

      // forward
      for (int t = 0; t < T; ++t) {
        double lb[8];  // n <= 8 in this project; asserted below
        for (int j = 0; j < n; ++j) lb[j] = 0.0;
        for (int c = 0; c < nc; ++c) {
          double x = track.at(t, c);
          if (std::isnan(x)) continue;
          double lx = logx[static_cast<std::size_t>(t) * nc + c];
          for (int j = 0; j < n; ++j) lb[j] += emission_logp(prep[c][j], x, lx);
        }
        double m = lb[0];
        for (int j = 1; j < n; ++j) m = std::max(m, lb[j]);
        if (!std::isfinite(m)) return kInf;  // slot impossible under every state
        ws.mshift[t] = m;
        double* bt = &ws.btilde[static_cast<std::size_t>(t) * n];
        for (int j = 0; j < n; ++j) bt[j] = std::exp(lb[j] - m);
        double* at = &ws.alphahat[static_cast<std::size_t>(t) * n];
        const double* prev = t > 0 ? &ws.alphahat[static_cast<std::size_t>(t - 1) * n] : nullptr;
        double c_t = 0.0;
        for (int j = 0; j < n; ++j) {
          double prior;
          if (t == 0) {
            prior = delta[j];
          } else {
            prior = 0.0;
            for (int i = 0; i < n; ++i) prior += prev[i] * tpm[i * n + j];
          }
          at[j] = prior * bt[j];
          c_t += at[j];
        }
        if (!(c_t > 0.0) || !std::isfinite(c_t)) return kInf;
        for (int j = 0; j < n; ++j) at[j] /= c_t;
        ws.ctilde[t] = c_t;
        loglik += std::log(c_t) + m;
      }

      if (want_grad) {
        // backward, accumulating posteriors and transition gradients
        for (int j = 0; j < n; ++j) ws.beta[j] = 1.0;
        for (int t = T - 1; t >= 0; --t) {
          const double* at = &ws.alphahat[static_cast<std::size_t>(t) * n];
          const double* bt = &ws.btilde[static_cast<std::size_t>(t) * n];
          for (int j = 0; j < n; ++j) ws.post[j] = at[j] * ws.beta[j];
          for (int c = 0; c < nc; ++c) {
            double x = track.at(t, c);
            if (std::isnan(x)) continue;
            double lx = logx[static_cast<std::size_t>(t) * nc + c];
            for (int j = 0; j < n; ++j)
              if (ws.post[j] > 0.0) emission_grad(prep[c][j], x, lx, ws.post[j], *grad);
          }
          if (t > 0) {
            const double* ap = &ws.alphahat[static_cast<std::size_t>(t - 1) * n];
            double q[8];
            for (int j = 0; j < n; ++j) q[j] = bt[j] * ws.beta[j] / ws.ctilde[t];
            for (int i = 0; i < n; ++i) {
              double nb = 0.0;
              for (int j = 0; j < n; ++j) {
                gtpm[i * n + j] += ap[i] * q[j];
                nb += tpm[i * n + j] * q[j];
              }
              ws.newbeta[i] = nb;
            }
            ws.beta.swap(ws.newbeta);
          } else {
            for (int j = 0; j < n; ++j) gdelta[j] += bt[j] * ws.beta[j] / ws.ctilde[0];
          }
        }
      }
    }

    if (want_grad && n > 1) {
      // Route the initial-distribution gradient through delta(Gamma):
      // solve (I - Gamma + U) v = gdelta, then d l/d gamma_ij += delta_i v_j.
      m_solve.assign(static_cast<std::size_t>(n) * n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          m_solve[i * n + j] = (i == j ? 1.0 : 0.0) - tpm[i * n + j] + 1.0;
      std::vector<double> v = detail::solve_linear(std::move(m_solve), gdelta, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) gtpm[i * n + j] += delta[i] * v[j];

      // Chain rule through the row-wise multinomial logit.
      std::size_t idx = 0;
      for (const WParam& p : layout) {
        if (p.kind == WKind::TpmLogit) {
          int i = p.row, j = p.col;
          double rowdot = 0.0;
          for (int kcol = 0; kcol < n; ++kcol) rowdot += gtpm[i * n + kcol] * tpm[i * n + kcol];
          (*grad)[idx] = tpm[i * n + j] * (gtpm[i * n + j] - rowdot);
        }
        ++idx;
      }
    }

    // Convert to the minimized objective.
    double f = -loglik;
    if (want_grad)
      for (double& g : *grad) g = -g;

    if (penalized) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (!std::isnan(box_lo[i]) && w[i] < box_lo[i]) {
          double d = box_lo[i] - w[i];
          f += kPenaltyWeight * d * d;
          if (want_grad) (*grad)[i] -= 2.0 * kPenaltyWeight * d;
        } else if (!std::isnan(box_hi[i]) && w[i] > box_hi[i]) {
          double d = w[i] - box_hi[i];
          f += kPenaltyWeight * d * d;
          if (want_grad) (*grad)[i] += 2.0 * kPenaltyWeight * d;
        }
      }
    }
    return f;
  }

  bool on_boundary(const std::vector<double>& w, double tol = 1e-6) const {
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!std::isnan(box_lo[i]) && w[i] <= box_lo[i] + tol) return true;
      if (!std::isnan(box_hi[i]) && w[i] >= box_hi[i] - tol) return true;
    }
    return false;
  }
};

// Draws one random starting model per the configured sampler.
HmmSpec sample_start(const HmmSpec& templ, const DataCache& cache, const StartSampler& s,
                     RandomStream& rng) {
  const int n = templ.n_states;
  HmmSpec out = templ;
  for (int i = 0; i < n; ++i) {
    double diag = n == 1 ? 1.0 : rng.uniform(s.diag_lo, s.diag_hi);
    for (int j = 0; j < n; ++j)
      out.tpm[i][j] = (i == j) ? diag : (1.0 - diag) / static_cast<double>(n - 1);
  }
  for (int c = 0; c < templ.n_channels(); ++c) {
    for (int st = 0; st < n; ++st) {
      double q = cache.quantile(c, (st + 0.5) / static_cast<double>(n));
      double jit = rng.uniform(1.0 - s.mean_jitter, 1.0 + s.mean_jitter);
      double mean = std::max(q * jit, 1e-3);
      const Distribution& d = templ.channels[c][st];
      if (std::get_if<Gamma>(&d)) {
        double shape = std::exp(rng.uniform(std::log(s.shape_lo), std::log(s.shape_hi)));
        out.channels[c][st] = Gamma(mean, shape);
      } else if (std::get_if<ZeroInflatedGamma>(&d)) {
        double shape = std::exp(rng.uniform(std::log(s.shape_lo), std::log(s.shape_hi)));
        double zf = cache.channels[c].zero_fraction;
        double zero = zf > 0.0 ? zf * rng.uniform(0.7, 1.3) : 1e-3;
        zero = std::min(std::max(zero, 1e-4), 0.9);
        out.channels[c][st] = ZeroInflatedGamma(zero, mean, shape);
      } else if (std::get_if<VonMises>(&d)) {
        double loc = rng.uniform(-kPi, kPi);
        double conc = std::exp(rng.uniform(std::log(s.conc_lo), std::log(s.conc_hi)));
        out.channels[c][st] = VonMises(loc, conc);
      } else if (std::get_if<LogNormal>(&d)) {
        out.channels[c][st] = LogNormal(std::log(mean), rng.uniform(0.3, 1.5));
      } else {
        throw std::invalid_argument("fit: cannot sample a start for family '" + family_name(d) +
                                    "'");
      }
    }
  }
  return out;
}

}  // namespace

double detail::neg_log_lik_working(const std::vector<double>& w, const HmmSpec& templ,
                                   const ObservationSeries& data, std::vector<double>* grad) {
  DataCache cache(data);
  Objective obj(cache, templ, ParameterBounds{});
  return obj(w, grad, /*penalized=*/false);
}

HmmSpec canonicalize_states(const HmmSpec& model) {
  const int n = model.n_states;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return mean_of(model.channels[0][a]) < mean_of(model.channels[0][b]);
  });
  HmmSpec out = model;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out.tpm[i][j] = model.tpm[order[i]][order[j]];
  for (int c = 0; c < model.n_channels(); ++c)
    for (int s = 0; s < n; ++s) out.channels[c][s] = model.channels[c][order[s]];
  if (model.init == InitMode::Fixed)
    for (int s = 0; s < n; ++s) out.init_probs[s] = model.init_probs[order[s]];
  return out;
}

HmmSpec duplicate_state(const HmmSpec& model, int state_index, double jitter) {
  model.validate();
  const int n = model.n_states;
  if (state_index < 0 || state_index >= n)
    throw std::invalid_argument("duplicate_state: index out of range");
  HmmSpec out;
  out.n_states = n + 1;
  out.init = model.init;
  const int dup = state_index;       // original position
  const int ins = state_index + 1;   // copy goes right after
  auto old_of = [&](int s) { return s <= dup ? s : s - 1; };

  out.tpm.assign(n + 1, std::vector<double>(n + 1, 0.0));
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      double g = model.tpm[old_of(i)][old_of(j)];
      out.tpm[i][j] = (j == dup || j == ins) ? 0.5 * g : g;
    }
  }
  if (model.init == InitMode::Fixed) {
    out.init_probs.resize(n + 1);
    for (int s = 0; s <= n; ++s) {
      double p = model.init_probs[old_of(s)];
      out.init_probs[s] = (s == dup || s == ins) ? 0.5 * p : p;
    }
  }
  out.channels.resize(model.n_channels());
  for (int c = 0; c < model.n_channels(); ++c) {
    out.channels[c].reserve(n + 1);
    for (int s = 0; s <= n; ++s) {
      Distribution d = model.channels[c][old_of(s)];
      if (s == ins && jitter != 0.0) {
        if (auto* g = std::get_if<Gamma>(&d)) {
          d = Gamma(g->mean * (1.0 + jitter), g->shape / (1.0 + jitter));
        } else if (auto* z = std::get_if<ZeroInflatedGamma>(&d)) {
          d = ZeroInflatedGamma(z->zero_mass, z->mean * (1.0 + jitter), z->shape / (1.0 + jitter));
        } else if (auto* v = std::get_if<VonMises>(&d)) {
          d = VonMises(v->location, std::max(v->concentration * (1.0 + jitter), 1e-3));
        } else if (auto* l = std::get_if<LogNormal>(&d)) {
          d = LogNormal(l->log_mean + jitter, l->log_sd);
        }
      }
      out.channels[c].push_back(std::move(d));
    }
  }
  return out;
}

FitResult fit(const ObservationSeries& data, const HmmSpec& templ, const FitConfig& config,
              const std::vector<HmmSpec>& extra_starts) {
  templ.validate();
  data.validate();
  if (templ.init != InitMode::Stationary)
    throw std::invalid_argument("fit: only stationary initial distributions are fitted");
  if (data.n_channels() != templ.n_channels())
    throw std::invalid_argument("fit: channel count mismatch");
  if (config.n_starts < 1) throw std::invalid_argument("fit: n_starts must be >= 1");
  if (!(config.tolerance > 0.0)) throw std::invalid_argument("fit: tolerance must be positive");

  DataCache cache(data);

  const std::size_t n_extra = extra_starts.size();
  const std::size_t total = n_extra + static_cast<std::size_t>(config.n_starts);

  struct StartOutcome {
    StartRecord record;
    std::vector<double> w;
    bool usable = false;
  };
  std::vector<StartOutcome> outcomes(total);

  parallel_for(total, config.n_threads, [&](std::size_t k) {
    Objective obj(cache, templ, config.bounds);
    StartOutcome& out = outcomes[k];
    std::uint64_t start_seed = derive_seed(config.seed, k);
    out.record.seed = start_seed;
    RandomStream rng(start_seed);
    HmmSpec model0;
    try {
      model0 = k < n_extra ? extra_starts[k] : sample_start(templ, cache, config.sampler, rng);
      std::vector<double> w0 = to_working(model0);
      OptimResult r = minimize_lbfgs([&](const std::vector<double>& w, std::vector<double>* g) {
        return obj(w, g);
      }, std::move(w0), config.max_iterations, config.tolerance);
      out.record.converged = r.converged;
      out.record.iterations = r.iterations;
      if (std::isfinite(r.f)) {
        double pure = -obj(r.x, nullptr, /*penalized=*/false);
        out.record.log_lik = pure;
        out.record.boundary = obj.on_boundary(r.x);
        out.w = std::move(r.x);
        out.usable = std::isfinite(pure);
      } else {
        out.record.log_lik = -kInf;
        out.record.converged = false;
      }
    } catch (const std::exception&) {
      out.record.log_lik = -kInf;
      out.record.converged = false;
    }
  });

  FitResult result;
  result.data_size = data.n_observed_slots();
  long best = -1;
  for (std::size_t k = 0; k < total; ++k) {
    result.starts.push_back(outcomes[k].record);
    if (outcomes[k].usable && outcomes[k].record.converged) {
      if (best < 0 || outcomes[k].record.log_lik > outcomes[best].record.log_lik)
        best = static_cast<long>(k);
    }
  }
  if (best < 0)
    throw FitFailure("fit: no start converged to a finite likelihood", result.starts);

  HmmSpec best_model = canonicalize_states(from_working(outcomes[best].w, templ));
  result.best_model = best_model;
  result.log_lik = log_likelihood(best_model, data);
  result.n_params = count_parameters(templ);
  return result;
}

}  // namespace hmmsel
