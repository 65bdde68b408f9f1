#include "psfmix/cmaes.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "psfmix/errors.hpp"

namespace psfmix {

void BoxProblem::validate() const {
  if (!objective) throw ValidationError("cmaes: missing objective");
  if (lower.empty() || lower.size() != upper.size())
    throw ValidationError("cmaes: bounds must be non-empty and of equal length");
  for (std::size_t i = 0; i < lower.size(); ++i)
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(upper[i] > lower[i]))
      throw ValidationError("cmaes: each box side must be finite with upper > lower");
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct RunOutcome {
  bool budget = false;
};

class Run {
 public:
  Run(const BoxProblem& p, const CmaEsConfig& cfg, std::size_t lambda, VectorXd mean,
      std::mt19937_64& rng, CmaEsResult& out)
      : p_(p), cfg_(cfg), n_(p.dimension()), lambda_(lambda), m_(std::move(mean)), rng_(rng),
        out_(out) {
    mu_ = lambda_ / 2;
    w_.resize(static_cast<Eigen::Index>(mu_));
    for (std::size_t i = 0; i < mu_; ++i)
      w_[static_cast<Eigen::Index>(i)] =
          std::log(static_cast<double>(mu_) + 0.5) - std::log(static_cast<double>(i + 1));
    w_ /= w_.sum();
    mueff_ = 1.0 / w_.squaredNorm();
    const double n = static_cast<double>(n_);
    cc_ = (4.0 + mueff_ / n) / (n + 4.0 + 2.0 * mueff_ / n);
    cs_ = (mueff_ + 2.0) / (n + mueff_ + 5.0);
    c1_ = 2.0 / ((n + 1.3) * (n + 1.3) + mueff_);
    cmu_ = std::min(1.0 - c1_, 2.0 * (mueff_ - 2.0 + 1.0 / mueff_) / ((n + 2.0) * (n + 2.0) + mueff_));
    ds_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff_ - 1.0) / (n + 1.0)) - 1.0) + cs_;
    chin_ = std::sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
    sigma_ = cfg.sigma0;
    C_ = MatrixXd::Identity(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    B_ = C_;
    D_ = VectorXd::Ones(static_cast<Eigen::Index>(n_));
    pc_ = VectorXd::Zero(static_cast<Eigen::Index>(n_));
    ps_ = pc_;
  }

  RunOutcome go() {
    const Eigen::Index n = static_cast<Eigen::Index>(n_);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t hist_len = 10 + static_cast<std::size_t>(std::ceil(30.0 * n_ / lambda_));
    std::vector<double> best_hist;
    std::vector<VectorXd> xs(lambda_), ys(lambda_);
    std::vector<double> fs(lambda_);
    for (std::size_t gen = 0;; ++gen) {
      if (out_.evaluations + lambda_ > cfg_.max_evaluations) return {true};
      for (std::size_t k = 0; k < lambda_; ++k) {
        VectorXd x(n), y(n);
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
          VectorXd z(n);
          for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng_);
          y = B_ * D_.cwiseProduct(z);
          x = m_ + sigma_ * y;
          ok = (x.array() >= 0.0).all() && (x.array() <= 1.0).all();
        }
        if (!ok) {
          x = x.cwiseMax(0.0).cwiseMin(1.0);
          y = (x - m_) / sigma_;
        }
        xs[k] = x;
        ys[k] = y;
      }
      std::vector<std::vector<double>> phys(lambda_, std::vector<double>(n_));
      for (std::size_t k = 0; k < lambda_; ++k)
        for (std::size_t i = 0; i < n_; ++i)
          phys[k][i] = p_.lower[i] + xs[k][static_cast<Eigen::Index>(i)] * (p_.upper[i] - p_.lower[i]);
      const long lam = static_cast<long>(lambda_);
#pragma omp parallel for schedule(dynamic) if (cfg_.parallel_evaluations)
      for (long k = 0; k < lam; ++k) {
        const double v = p_.objective(phys[static_cast<std::size_t>(k)]);
        fs[static_cast<std::size_t>(k)] = std::isfinite(v) ? v : std::numeric_limits<double>::max();
      }
      out_.evaluations += lambda_;
      ++out_.generations;
      std::vector<std::size_t> order(lambda_);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
      if (fs[order[0]] < out_.f) {
        out_.f = fs[order[0]];
        out_.x = phys[order[0]];
      }
      out_.trace.push_back(out_.f);

      VectorXd yw = VectorXd::Zero(n);
      for (std::size_t i = 0; i < mu_; ++i) yw += w_[static_cast<Eigen::Index>(i)] * ys[order[i]];
      m_ += sigma_ * yw;
      const VectorXd cinv_yw = B_ * (B_.transpose() * yw).cwiseQuotient(D_);
      ps_ = (1.0 - cs_) * ps_ + std::sqrt(cs_ * (2.0 - cs_) * mueff_) * cinv_yw;
      const double denom = std::sqrt(1.0 - std::pow(1.0 - cs_, 2.0 * static_cast<double>(gen + 1)));
      const bool hsig = ps_.norm() / denom < (1.4 + 2.0 / (static_cast<double>(n_) + 1.0)) * chin_;
      pc_ = (1.0 - cc_) * pc_ + (hsig ? std::sqrt(cc_ * (2.0 - cc_) * mueff_) : 0.0) * yw;
      MatrixXd rank_mu = MatrixXd::Zero(n, n);
      for (std::size_t i = 0; i < mu_; ++i)
        rank_mu += w_[static_cast<Eigen::Index>(i)] * ys[order[i]] * ys[order[i]].transpose();
      C_ = (1.0 - c1_ - cmu_) * C_ +
           c1_ * (pc_ * pc_.transpose() + (hsig ? 0.0 : cc_ * (2.0 - cc_)) * C_) + cmu_ * rank_mu;
      sigma_ *= std::exp((cs_ / ds_) * (ps_.norm() / chin_ - 1.0));
      C_ = 0.5 * (C_ + C_.transpose());
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(C_);
      B_ = es.eigenvectors();
      D_ = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt();

      // Stopping tests.
      best_hist.push_back(fs[order[0]]);
      const double frange = fs[order[lambda_ - 1]] - fs[order[0]];
      double hrange = 0.0;
      if (best_hist.size() >= hist_len) {
        const auto first = best_hist.end() - static_cast<long>(hist_len);
        const auto [lo, hi] = std::minmax_element(first, best_hist.end());
        hrange = *hi - *lo;
      }
      if (best_hist.size() >= hist_len && std::max(frange, hrange) <= cfg_.tol_fun) return {};
      if (sigma_ * std::sqrt(C_.diagonal().maxCoeff()) < cfg_.tol_x) return {};
      if (D_.maxCoeff() > 1e7 * D_.minCoeff()) return {};
      if (!std::isfinite(sigma_) || sigma_ > 1e6) return {};
    }
  }

 private:
  const BoxProblem& p_;
  const CmaEsConfig& cfg_;
  std::size_t n_, lambda_, mu_ = 0;
  VectorXd m_, w_, pc_, ps_, D_;
  MatrixXd C_, B_;
  double mueff_ = 0, cc_ = 0, cs_ = 0, c1_ = 0, cmu_ = 0, ds_ = 0, chin_ = 0, sigma_ = 0;
  std::mt19937_64& rng_;
  CmaEsResult& out_;
};

}  // namespace

CmaEsResult cmaes_minimize(const BoxProblem& problem, const CmaEsConfig& config) {
  problem.validate();
  const std::size_t n = problem.dimension();
  if (!(config.sigma0 > 0.0)) throw ValidationError("cmaes: sigma0 must be > 0");
  std::size_t lambda = config.population;
  if (lambda == 0) lambda = 4 + static_cast<std::size_t>(std::floor(3.0 * std::log(static_cast<double>(n))));
  if (lambda < 4) throw ValidationError("cmaes: population must be >= 4");
  VectorXd mean = VectorXd::Constant(static_cast<Eigen::Index>(n), 0.5);
  if (!config.initial_mean.empty()) {
    if (config.initial_mean.size() != n) throw ValidationError("cmaes: initial mean size mismatch");
    for (std::size_t i = 0; i < n; ++i)
      mean[static_cast<Eigen::Index>(i)] = std::clamp(
          (config.initial_mean[i] - problem.lower[i]) / (problem.upper[i] - problem.lower[i]), 0.0, 1.0);
  }
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  CmaEsResult out;
  out.f = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r <= config.restarts; ++r) {
    if (r > 0) {
      lambda *= 2;
      for (Eigen::Index i = 0; i < mean.size(); ++i) mean[i] = unif(rng);
      out.restarts_used = r;
    }
    Run run(problem, config, lambda, mean, rng, out);
    if (run.go().budget) {
      out.budget_exhausted = true;
      break;
    }
  }
  if (out.x.empty()) {
    out.x.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.x[i] = 0.5 * (problem.lower[i] + problem.upper[i]);
    out.f = problem.objective(out.x);
    ++out.evaluations;
  }
  return out;
}

}  // namespace psfmix
