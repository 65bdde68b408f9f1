#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace psfmix {

using BlackBoxObjective = std::function<double(std::span<const double>)>;

struct BoxProblem {
  BlackBoxObjective objective;
  std::vector<double> lower;
  std::vector<double> upper;

  void validate() const;
  std::size_t dimension() const { return lower.size(); }
};

struct CmaEsConfig {
  std::size_t population = 0;        // 0: 4 + floor(3 ln n)
  double sigma0 = 0.25;              // fraction of each box width
  std::vector<double> initial_mean;  // empty: box centre
  std::size_t max_evaluations = 20000;
  double tol_fun = 1e-12;
  double tol_x = 1e-11;  // in normalized box units
  std::size_t restarts = 3;
  std::uint64_t seed = 1;
  bool parallel_evaluations = false;
};

struct CmaEsResult {
  std::vector<double> x;
  double f = 0.0;
  std::size_t evaluations = 0;
  std::size_t generations = 0;
  std::size_t restarts_used = 0;
  bool budget_exhausted = false;
  std::vector<double> trace;  // best value so far, per generation
};

/// (mu/mu_w, lambda)-CMA-ES in box-normalized coordinates with increasing
/// population restarts. Infeasible samples are redrawn up to 100 times, then
/// clamped.
CmaEsResult cmaes_minimize(const BoxProblem& problem, const CmaEsConfig& config);

}  // namespace psfmix
