#include "psfmix/lbfgsb.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "psfmix/errors.hpp"

namespace psfmix {

namespace {

struct Box {
  std::vector<double> lo, hi;
  double clamp(std::size_t i, double v) const { return std::min(hi[i], std::max(lo[i], v)); }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double projected_gradient_norm(const Box& box, const std::vector<double>& x,
                               const std::vector<double>& g) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(box.clamp(i, x[i] - g[i]) - x[i]));
  return m;
}

}  // namespace

LbfgsbResult lbfgsb_minimize(const GradientObjective& f, std::vector<double> x,
                             std::span<const double> lower, std::span<const double> upper,
                             const LbfgsbConfig& config) {
  const std::size_t n = x.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  Box box{std::vector<double>(n, -inf), std::vector<double>(n, inf)};
  if (!lower.empty()) {
    if (lower.size() != n) throw ValidationError("lbfgsb: lower bound size mismatch");
    box.lo.assign(lower.begin(), lower.end());
  }
  if (!upper.empty()) {
    if (upper.size() != n) throw ValidationError("lbfgsb: upper bound size mismatch");
    box.hi.assign(upper.begin(), upper.end());
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (box.lo[i] > box.hi[i]) throw ValidationError("lbfgsb: empty box");
    x[i] = box.clamp(i, x[i]);
  }

  LbfgsbResult res;
  std::vector<double> g(n), g_new(n), d(n), x_new(n), q(n);
  double fx = f(x, g);
  ++res.evaluations;
  if (!std::isfinite(fx)) throw NumericalError("lbfgsb: objective not finite at the start");
  std::deque<std::vector<double>> S, Y;
  std::deque<double> rho_hist;

  for (res.iterations = 0; res.iterations < config.max_iters;) {
    res.pg_norm = projected_gradient_norm(box, x, g);
    if (res.pg_norm < config.pg_tol) {
      res.converged = true;
      break;
    }
    // Variables held at a bound by the gradient stay fixed this iteration.
    std::vector<char> active(n, 0);
    for (std::size_t i = 0; i < n; ++i)
      active[i] = (x[i] <= box.lo[i] && g[i] > 0.0) || (x[i] >= box.hi[i] && g[i] < 0.0);
    for (std::size_t i = 0; i < n; ++i) q[i] = active[i] ? 0.0 : g[i];
    const std::size_t mem = S.size();
    std::vector<double> alpha(mem);
    for (std::size_t k = mem; k-- > 0;) {
      alpha[k] = rho_hist[k] * dot(S[k], q);
      for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[k] * Y[k][i];
    }
    double gamma = 1.0;
    if (mem > 0) gamma = dot(S.back(), Y.back()) / dot(Y.back(), Y.back());
    for (std::size_t i = 0; i < n; ++i) q[i] *= gamma;
    for (std::size_t k = 0; k < mem; ++k) {
      const double beta = rho_hist[k] * dot(Y[k], q);
      for (std::size_t i = 0; i < n; ++i) q[i] += S[k][i] * (alpha[k] - beta);
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = active[i] ? 0.0 : -q[i];
    double slope = dot(d, g);
    if (!(slope < 0.0)) {
      for (std::size_t i = 0; i < n; ++i) d[i] = active[i] ? 0.0 : -g[i];
      slope = dot(d, g);
      S.clear();
      Y.clear();
      rho_hist.clear();
    }
    double t = 1.0;
    if (mem == 0) {
      double dmax = 0.0;
      for (double v : d) dmax = std::max(dmax, std::abs(v));
      if (dmax > 0.0) t = std::min(1.0, 1.0 / dmax);
    }
    bool accepted = false;
    double f_new = fx;
    for (std::size_t bt = 0; bt < config.max_backtracks; ++bt, t *= 0.5) {
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        x_new[i] = box.clamp(i, x[i] + t * d[i]);
        decrease += g[i] * (x_new[i] - x[i]);
      }
      if (x_new == x) break;
      try {
        f_new = f(x_new, g_new);
      } catch (const DomainError&) {
        f_new = inf;
      }
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= fx + config.armijo * decrease) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // no further decrease attainable at this precision
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * dot(y, y)) {
      S.push_back(std::move(s));
      Y.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (S.size() > config.memory) {
        S.pop_front();
        Y.pop_front();
        rho_hist.pop_front();
      }
    }
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
    ++res.iterations;
    res.trace.push_back(fx);
  }
  res.pg_norm = projected_gradient_norm(box, x, g);
  if (res.pg_norm < config.pg_tol) res.converged = true;
  res.x = std::move(x);
  res.f = fx;
  return res;
}

}  // namespace psfmix
