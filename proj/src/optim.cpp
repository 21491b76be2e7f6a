#include "hmmsel/optim.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace hmmsel {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inf_norm(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

OptimResult minimize_lbfgs(const ObjectiveFn& fg, std::vector<double> x0, int max_iterations,
                           double tolerance, int history) {
  const std::size_t n = x0.size();
  const double c1 = 1e-4;  // Armijo slope fraction
  const double c2 = 0.9;   // curvature fraction

  OptimResult res;
  res.x = std::move(x0);
  std::vector<double> grad(n, 0.0);
  res.f = fg(res.x, &grad);
  res.n_evaluations = 1;
  if (!std::isfinite(res.f)) return res;  // unusable start

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> dir(n), x_new(n), g_new(n), alpha_buf;

  for (res.iterations = 0; res.iterations < max_iterations; ++res.iterations) {
    if (inf_norm(grad) <= 1e-10 * (1.0 + std::abs(res.f))) {
      res.converged = true;
      return res;
    }

    // Two-loop recursion for d = -H * grad.
    dir = grad;
    alpha_buf.assign(s_hist.size(), 0.0);
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha_buf[i] = rho_hist[i] * dot(s_hist[i], dir);
      for (std::size_t k = 0; k < n; ++k) dir[k] -= alpha_buf[i] * y_hist[i][k];
    }
    if (!s_hist.empty()) {
      double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (double& v : dir) v *= gamma;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      double beta = rho_hist[i] * dot(y_hist[i], dir);
      for (std::size_t k = 0; k < n; ++k) dir[k] += (alpha_buf[i] - beta) * s_hist[i][k];
    }
    for (double& v : dir) v = -v;

    double slope = dot(grad, dir);
    if (!(slope < 0.0)) {  // not a descent direction; restart from steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t k = 0; k < n; ++k) dir[k] = -grad[k];
      slope = dot(grad, dir);
      if (!(slope < 0.0)) {
        res.converged = true;  // gradient numerically zero
        return res;
      }
    }

    // Weak-Wolfe bracketing line search (expand, then bisect).
    double step = res.iterations == 0 ? std::min(1.0, 1.0 / (1.0 + inf_norm(grad))) : 1.0;
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double f_new = res.f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t k = 0; k < n; ++k) x_new[k] = res.x[k] + step * dir[k];
      f_new = fg(x_new, &g_new);
      ++res.n_evaluations;
      if (!std::isfinite(f_new) || f_new > res.f + c1 * step * slope) {
        hi = step;
      } else if (dot(g_new, dir) < c2 * slope) {
        lo = step;
      } else {
        accepted = true;
        break;
      }
      step = std::isinf(hi) ? 2.0 * lo : 0.5 * (lo + hi);
      if (step <= 0.0 || (hi - lo) < 1e-16 * (1.0 + lo)) break;
    }
    if (!accepted && std::isfinite(f_new) && f_new < res.f) {
      accepted = true;  // Armijo-only fallback when curvature cannot be met
    }
    if (!accepted) {
      // No usable step; report convergence only if we were already at rest.
      res.converged = inf_norm(grad) <= 1e-5 * (1.0 + std::abs(res.f));
      return res;
    }

    double improvement = res.f - f_new;
    std::vector<double> s_vec(n), y_vec(n);
    for (std::size_t k = 0; k < n; ++k) {
      s_vec[k] = x_new[k] - res.x[k];
      y_vec[k] = g_new[k] - grad[k];
    }
    double sy = dot(s_vec, y_vec);
    if (sy > 1e-12 * std::sqrt(dot(s_vec, s_vec)) * std::sqrt(dot(y_vec, y_vec))) {
      s_hist.push_back(std::move(s_vec));
      y_hist.push_back(std::move(y_vec));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    res.x.swap(x_new);
    grad.swap(g_new);
    res.f = f_new;
    if (improvement <= tolerance * (std::abs(res.f) + 1.0)) {
      res.converged = true;
      ++res.iterations;
      return res;
    }
  }
  return res;  // iteration budget exhausted
}

}  // namespace hmmsel
