#include <doctest.h>

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>

#include "hmmsel/fit.hpp"
#include "hmmsel/model.hpp"
#include "hmmsel/optim.hpp"
#include "hmmsel/select.hpp"
#include "support/builders.hpp"

using namespace hmmsel;
using namespace hmmsel::testing;

TEST_CASE("working transform round-trips exactly") {
  HmmSpec base = baseline2();
  std::vector<double> w = to_working(base);
  // 2-state closed form: off-diagonal logit log(0.1/0.9)
  CHECK(w[0] == doctest::Approx(std::log(0.1 / 0.9)).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(std::log(0.1 / 0.9)).epsilon(1e-14));
  HmmSpec back = from_working(w, base);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      CHECK(back.tpm[i][j] == doctest::Approx(base.tpm[i][j]).epsilon(1e-10));
  CHECK(std::get<Gamma>(back.channels[0][0]).mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::get<Gamma>(back.channels[0][1]).shape == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("working transform round-trip property over random 3-state models") {
  RandomStream rng(77);
  for (int rep = 0; rep < 100; ++rep) {
    HmmSpec m = random_gamma_hmm(3, rng);
    HmmSpec back = from_working(to_working(m), m);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(std::abs(back.tpm[i][j] - m.tpm[i][j]) < 1e-10);
    for (int s = 0; s < 3; ++s) {
      CHECK(std::abs(std::get<Gamma>(back.channels[0][s]).mean -
                     std::get<Gamma>(m.channels[0][s]).mean) < 1e-10);
      CHECK(std::abs(std::get<Gamma>(back.channels[0][s]).shape -
                     std::get<Gamma>(m.channels[0][s]).shape) < 1e-10);
    }
  }
}

TEST_CASE("working transform round-trips the movement family") {
  HmmSpec m = make_template({EmissionKind::ZeroInflatedGamma, EmissionKind::VonMises}, 3);
  m.channels[0][1] = ZeroInflatedGamma(0.21, 3.3, 1.7);
  m.channels[1][2] = VonMises(-2.4, 6.5);
  HmmSpec back = from_working(to_working(m), m);
  const auto& z = std::get<ZeroInflatedGamma>(back.channels[0][1]);
  CHECK(z.zero_mass == doctest::Approx(0.21).epsilon(1e-12));
  CHECK(z.mean == doctest::Approx(3.3).epsilon(1e-12));
  const auto& v = std::get<VonMises>(back.channels[1][2]);
  CHECK(v.location == doctest::Approx(-2.4).epsilon(1e-12));
  CHECK(v.concentration == doctest::Approx(6.5).epsilon(1e-12));
}

TEST_CASE("parameter counts") {
  // case-study family: zero-inflated gamma steps + von Mises angles
  for (auto [n, expected] : {std::pair{2, 12}, {3, 21}, {4, 32}, {5, 45}}) {
    HmmSpec t = make_template({EmissionKind::ZeroInflatedGamma, EmissionKind::VonMises}, n);
    CHECK(count_parameters(t) == expected);
  }
  CHECK(count_parameters(make_template({EmissionKind::Gamma}, 2)) == 6);
  CHECK(count_parameters(make_template({EmissionKind::Gamma}, 5)) == 30);

  HmmSpec fixed = baseline2();
  fixed.init = InitMode::Fixed;
  fixed.init_probs = {0.5, 0.5};
  CHECK_THROWS(count_parameters(fixed));
}

TEST_CASE("analytic gradient agrees with central differences") {
  RandomStream rng(123);
  // gamma family with missing values
  HmmSpec m = random_gamma_hmm(3, rng);
  auto [data, states] = simulate(m, {40, 25}, rng);
  data.tracks[0].at(3, 0) = std::nan("");
  data.tracks[1].at(10, 0) = std::nan("");

  auto check_gradient = [](const HmmSpec& model, const ObservationSeries& d) {
    std::vector<double> w = to_working(model);
    std::vector<double> g;
    detail::neg_log_lik_working(w, model, d, &g);
    for (std::size_t i = 0; i < w.size(); ++i) {
      double h = 1e-6 * (1.0 + std::abs(w[i]));
      std::vector<double> wp = w, wm = w;
      wp[i] += h;
      wm[i] -= h;
      double fd = (detail::neg_log_lik_working(wp, model, d, nullptr) -
                   detail::neg_log_lik_working(wm, model, d, nullptr)) /
                  (2.0 * h);
      CHECK(std::abs(fd - g[i]) <= 1e-4 * (1.0 + std::abs(fd)));
    }
  };
  check_gradient(m, data);

  // movement family (zero-inflated gamma + von Mises), zeros included
  HmmSpec mv = make_template({EmissionKind::ZeroInflatedGamma, EmissionKind::VonMises}, 2);
  mv.channels[0][0] = ZeroInflatedGamma(0.3, 0.6, 0.9);
  mv.channels[0][1] = ZeroInflatedGamma(0.02, 5.0, 1.8);
  mv.channels[1][0] = VonMises(3.0, 0.4);
  mv.channels[1][1] = VonMises(0.1, 2.0);
  RandomStream rng2(321);
  auto [mdata, mstates] = simulate(mv, {60}, rng2);
  check_gradient(mv, mdata);
}

TEST_CASE("lbfgs minimizes standard test functions") {
  // Rosenbrock
  auto rosen = [](const std::vector<double>& x, std::vector<double>* g) {
    double a = 1.0 - x[0];
    double b = x[1] - x[0] * x[0];
    if (g != nullptr) {
      (*g)[0] = -2.0 * a - 400.0 * x[0] * b;
      (*g)[1] = 200.0 * b;
    }
    return a * a + 100.0 * b * b;
  };
  OptimResult r = minimize_lbfgs(rosen, {-1.2, 1.0}, 2000, 1e-14);
  CHECK(r.converged);
  CHECK(std::abs(r.x[0] - 1.0) < 1e-5);
  CHECK(std::abs(r.x[1] - 1.0) < 1e-5);

  // convex quadratic in 10 dimensions
  auto quad = [](const std::vector<double>& x, std::vector<double>* g) {
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double c = static_cast<double>(i + 1);
      f += 0.5 * c * x[i] * x[i];
      if (g != nullptr) (*g)[i] = c * x[i];
    }
    return f;
  };
  OptimResult q = minimize_lbfgs(quad, std::vector<double>(10, 3.0), 500, 1e-14);
  CHECK(q.converged);
  CHECK(q.f < 1e-10);

  // +inf regions are backed away from
  auto walled = [](const std::vector<double>& x, std::vector<double>* g) {
    if (x[0] <= -2.0) return std::numeric_limits<double>::infinity();
    if (g != nullptr) (*g)[0] = 2.0 * (x[0] - 1.0);
    return (x[0] - 1.0) * (x[0] - 1.0);
  };
  OptimResult w = minimize_lbfgs(walled, {-1.9}, 200, 1e-12);
  CHECK(w.converged);
  CHECK(std::abs(w.x[0] - 1.0) < 1e-5);
}

TEST_CASE("one-state fit matches the direct gamma MLE") {
  HmmSpec gen;
  gen.n_states = 1;
  gen.tpm = {{1.0}};
  gen.channels = {{Distribution(Gamma(2.5, 1.4))}};
  RandomStream rng(808);
  auto [data, states] = simulate(gen, {3000}, rng);

  FitConfig cfg;
  cfg.n_starts = 5;
  cfg.seed = 11;
  FitResult fr = fit(data, make_template({EmissionKind::Gamma}, 1), cfg);

  // direct MLE oracle: mean = sample mean; shape solves
  // log(a) - digamma(a) = log(mean) - mean(log x)
  double sx = 0.0, slx = 0.0;
  long n = 0;
  for (int t = 0; t < data.tracks[0].n_slots; ++t) {
    double x = data.tracks[0].at(t, 0);
    sx += x;
    slx += std::log(x);
    ++n;
  }
  double xbar = sx / n;
  double target = std::log(xbar) - slx / n;
  double lo = 1e-3, hi = 100.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double v = std::log(mid) - boost::math::digamma(mid);
    (v > target ? lo : hi) = mid;
  }
  double shape_mle = 0.5 * (lo + hi);
  HmmSpec oracle = gen;
  oracle.channels[0][0] = Gamma(xbar, shape_mle);
  double oracle_ll = log_likelihood(oracle, data);
  CHECK(std::abs(fr.log_lik - oracle_ll) <= 1e-4 * std::abs(oracle_ll));
  CHECK(fr.log_lik >= oracle_ll - 1e-4);
}

TEST_CASE("fit recovers the baseline and satisfies its invariants") {
  HmmSpec base = baseline2();
  RandomStream rng(2024);
  auto [data, states] = simulate(base, {2000}, rng);

  FitConfig cfg;
  cfg.n_starts = 10;
  cfg.seed = 5;
  cfg.n_threads = 2;
  FitResult fr = fit(data, make_template({EmissionKind::Gamma}, 2), cfg);

  const auto& g1 = std::get<Gamma>(fr.best_model.channels[0][0]);
  const auto& g2 = std::get<Gamma>(fr.best_model.channels[0][1]);
  CHECK(g1.mean == doctest::Approx(0.5).epsilon(0.25));
  CHECK(g2.mean == doctest::Approx(4.0).epsilon(0.15));
  CHECK(g1.mean < g2.mean);  // canonical state order

  // reported log-lik equals the model op on the best model
  CHECK(fr.log_lik == doctest::Approx(log_likelihood(fr.best_model, data)).epsilon(1e-9));
  CHECK(fr.n_params == 6);
  CHECK(fr.data_size == 2000);

  // reproducible bit for bit
  FitResult fr2 = fit(data, make_template({EmissionKind::Gamma}, 2), cfg);
  CHECK(fr2.log_lik == fr.log_lik);
  CHECK(std::get<Gamma>(fr2.best_model.channels[0][0]).mean == g1.mean);

  // refit with the best model as the only start reproduces the optimum
  FitConfig warm = cfg;
  warm.n_starts = 1;
  FitResult fr3 = fit(data, make_template({EmissionKind::Gamma}, 2), warm, {fr.best_model});
  CHECK(fr3.log_lik >= fr.log_lik - 1e-6 * (std::abs(fr.log_lik) + 1.0));
}

TEST_CASE("fit failure carries per-start diagnostics") {
  HmmSpec base = baseline2();
  RandomStream rng(31);
  auto [data, states] = simulate(base, {120}, rng);
  FitConfig cfg;
  cfg.n_starts = 3;
  cfg.seed = 9;
  cfg.max_iterations = 0;  // nothing can converge
  try {
    fit(data, make_template({EmissionKind::Gamma}, 2), cfg);
    FAIL("expected FitFailure");
  } catch (const FitFailure& e) {
    CHECK(e.starts().size() == 3);
    for (const auto& s : e.starts()) CHECK_FALSE(s.converged);
  }
}

TEST_CASE("duplicating a state preserves the likelihood") {
  HmmSpec base = baseline2();
  RandomStream rng(64);
  auto [data, states] = simulate(base, {200}, rng);
  double ll2 = log_likelihood(base, data);
  for (int s = 0; s < 2; ++s) {
    HmmSpec bigger = duplicate_state(base, s, 0.0);
    CHECK(bigger.n_states == 3);
    CHECK(log_likelihood(bigger, data) == doctest::Approx(ll2).epsilon(1e-10));
  }
  // jittered copy stays near the original likelihood
  HmmSpec jittered = duplicate_state(base, 1, 0.05);
  CHECK(std::abs(log_likelihood(jittered, data) - ll2) < 5.0);
}

TEST_CASE("fit rejects invalid setups") {
  HmmSpec base = baseline2();
  RandomStream rng(1);
  auto [data, states] = simulate(base, {50}, rng);
  FitConfig cfg;
  cfg.n_starts = 0;
  CHECK_THROWS(fit(data, make_template({EmissionKind::Gamma}, 2), cfg));
  cfg.n_starts = 1;
  HmmSpec fixed = base;
  fixed.init = InitMode::Fixed;
  fixed.init_probs = {0.5, 0.5};
  CHECK_THROWS(fit(data, fixed, cfg));
}
