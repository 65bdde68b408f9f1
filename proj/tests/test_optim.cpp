#include <doctest.h>

#include <cmath>

#include "psfmix/cmaes.hpp"
#include "psfmix/errors.hpp"
#include "psfmix/lbfgsb.hpp"

using namespace psfmix;

namespace {

BoxProblem sphere(std::size_t n, double shift = 0.0) {
  BoxProblem p;
  p.lower.assign(n, -5.0);
  p.upper.assign(n, 5.0);
  p.objective = [shift](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += (v - shift) * (v - shift);
    return s;
  };
  return p;
}

BoxProblem rosenbrock(std::size_t n) {
  BoxProblem p;
  p.lower.assign(n, -2.0);
  p.upper.assign(n, 2.0);
  p.objective = [](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i)
      s += 100.0 * std::pow(x[i + 1] - x[i] * x[i], 2) + std::pow(1.0 - x[i], 2);
    return s;
  };
  return p;
}

}  // namespace

TEST_CASE("CMA-ES on the sphere") {
  CmaEsConfig cfg;
  cfg.max_evaluations = 5000;
  cfg.seed = 7;
  const auto r = cmaes_minimize(sphere(5), cfg);
  for (double v : r.x) CHECK(std::abs(v) < 1e-6);
  CHECK(r.evaluations <= 5000);
  CHECK(r.trace.size() == r.generations);
  for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] <= r.trace[i - 1]);
}

TEST_CASE("CMA-ES uses rankings only") {
  CmaEsConfig cfg;
  // Value-based stopping rules are switched off so only the rankings matter.
  cfg.max_evaluations = 600;
  cfg.tol_fun = 0.0;
  cfg.tol_x = 0.0;
  cfg.seed = 11;
  cfg.restarts = 0;
  auto base = rosenbrock(4);
  const auto a = cmaes_minimize(base, cfg);
  auto warped = base;
  warped.objective = [f = base.objective](std::span<const double> x) { return std::exp(0.01 * f(x)); };
  auto shifted = base;
  shifted.objective = [f = base.objective](std::span<const double> x) { return f(x) + 1234.5; };
  const auto b = cmaes_minimize(warped, cfg);
  const auto c = cmaes_minimize(shifted, cfg);
  CHECK(a.x == b.x);
  CHECK(a.x == c.x);
  CHECK(a.evaluations == c.evaluations);
}

TEST_CASE("CMA-ES determinism, bounds and budget") {
  CmaEsConfig cfg;
  cfg.max_evaluations = 2000;
  cfg.seed = 3;
  const auto p = rosenbrock(3);
  const auto a = cmaes_minimize(p, cfg), b = cmaes_minimize(p, cfg);
  CHECK(a.trace == b.trace);
  CHECK(a.x == b.x);
  cfg.seed = 4;
  CHECK(cmaes_minimize(p, cfg).trace != a.trace);

  // Optimum outside the box sits on the boundary.
  auto off = sphere(3, 7.0);
  cfg.max_evaluations = 4000;
  const auto r = cmaes_minimize(off, cfg);
  for (double v : r.x) {
    CHECK(v <= 5.0);
    CHECK(v == doctest::Approx(5.0).epsilon(1e-6));
  }

  cfg.max_evaluations = 50;
  cfg.tol_fun = 0.0;
  cfg.tol_x = 0.0;
  const auto cut = cmaes_minimize(rosenbrock(6), cfg);
  CHECK(cut.budget_exhausted);
  CHECK(cut.evaluations <= 50);

  BoxProblem bad = sphere(2);
  bad.upper[1] = -6.0;
  CHECK_THROWS_AS(cmaes_minimize(bad, cfg), ValidationError);
}

TEST_CASE("CMA-ES parallel generation evaluation matches serial") {
  CmaEsConfig cfg;
  cfg.max_evaluations = 3000;
  cfg.seed = 5;
  const auto p = rosenbrock(4);
  const auto serial = cmaes_minimize(p, cfg);
  cfg.parallel_evaluations = true;
  const auto parallel = cmaes_minimize(p, cfg);
  CHECK(serial.x == parallel.x);
  CHECK(serial.trace == parallel.trace);
}

TEST_CASE("CMA-ES restarts improve a multimodal search") {
  BoxProblem rastrigin;
  rastrigin.lower.assign(4, -5.12);
  rastrigin.upper.assign(4, 5.12);
  rastrigin.objective = [](std::span<const double> x) {
    double s = 10.0 * static_cast<double>(x.size());
    for (double v : x) s += v * v - 10.0 * std::cos(2.0 * M_PI * v);
    return s;
  };
  CmaEsConfig cfg;
  cfg.max_evaluations = 60000;
  cfg.restarts = 6;
  cfg.seed = 2;
  const auto r = cmaes_minimize(rastrigin, cfg);
  CHECK(r.f < 1.0 + 1e-9);
}

TEST_CASE("L-BFGS-B") {
  SUBCASE("unconstrained quadratic") {
    const GradientObjective f = [](std::span<const double> x, std::span<double> g) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double a = static_cast<double>(i + 1);
        s += 0.5 * a * (x[i] - 1.0) * (x[i] - 1.0);
        g[i] = a * (x[i] - 1.0);
      }
      return s;
    };
    const auto r = lbfgsb_minimize(f, std::vector<double>(6, -3.0), {}, {});
    CHECK(r.converged);
    for (double v : r.x) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("active bounds") {
    const GradientObjective f = [](std::span<const double> x, std::span<double> g) {
      g[0] = 2.0 * (x[0] + 1.0);
      g[1] = 2.0 * (x[1] - 3.0);
      return (x[0] + 1.0) * (x[0] + 1.0) + (x[1] - 3.0) * (x[1] - 3.0);
    };
    const std::vector<double> lo{0.0, 0.0}, hi{10.0, 2.0};
    const auto r = lbfgsb_minimize(f, {5.0, 1.0}, lo, hi);
    CHECK(r.converged);
    CHECK(r.x[0] == 0.0);
    CHECK(r.x[1] == 2.0);
    CHECK(r.pg_norm < 1e-6);
  }
  SUBCASE("Rosenbrock, monotone trace") {
    const GradientObjective f = [](std::span<const double> x, std::span<double> g) {
      const double a = x[1] - x[0] * x[0];
      g[0] = -400.0 * a * x[0] - 2.0 * (1.0 - x[0]);
      g[1] = 200.0 * a;
      return 100.0 * a * a + (1.0 - x[0]) * (1.0 - x[0]);
    };
    const std::vector<double> lo{-5.0, -5.0}, hi{5.0, 5.0};
    auto cfg = LbfgsbConfig{};
    cfg.pg_tol = 1e-8;
    const auto r = lbfgsb_minimize(f, {-1.2, 1.0}, lo, hi, cfg);
    CHECK(r.converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-6));
    for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i] <= r.trace[i - 1]);
  }
}
