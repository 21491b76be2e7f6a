#pragma once

#include <functional>
#include <vector>

namespace hmmsel {

// Objective callback: returns f(x) and, when grad is non-null, writes the
// gradient. May return +inf outside the usable region; the line search backs
// off from such points.
using ObjectiveFn = std::function<double(const std::vector<double>&, std::vector<double>*)>;

struct OptimResult {
  std::vector<double> x;
  double f = 0.0;
  int iterations = 0;
  bool converged = false;
  int n_evaluations = 0;
};

// Limited-memory BFGS minimizer with a bracketing weak-Wolfe line search.
// Declares convergence when the relative improvement of an accepted step
// falls below `tolerance`, or when the gradient becomes negligible.
OptimResult minimize_lbfgs(const ObjectiveFn& fg, std::vector<double> x0, int max_iterations,
                           double tolerance, int history = 10);

}  // namespace hmmsel
