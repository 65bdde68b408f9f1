#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace psfmix {

/// f(x) with the gradient written into grad.
using GradientObjective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct LbfgsbConfig {
  std::size_t memory = 10;
  std::size_t max_iters = 500;
  double pg_tol = 1e-6;  // infinity norm of the projected gradient
  double armijo = 1e-4;
  std::size_t max_backtracks = 60;
};

struct LbfgsbResult {
  std::vector<double> x;
  double f = 0.0;
  double pg_norm = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after each iteration
};

/// Limited-memory quasi-Newton descent on the box [lower, upper] with a
/// projected backtracking line search. Empty bound vectors mean unbounded.
LbfgsbResult lbfgsb_minimize(const GradientObjective& f, std::vector<double> x0,
                             std::span<const double> lower, std::span<const double> upper,
                             const LbfgsbConfig& config = {});

}  // namespace psfmix
