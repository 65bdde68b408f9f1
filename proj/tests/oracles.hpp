#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <vector>

#include "psfmix/likelihood.hpp"

namespace psfmix::oracle {

inline double objective_of(const Eigen::MatrixXd& b, std::span<const std::size_t> block_sizes,
                           const std::vector<double>& lambdas, const std::vector<double>& p,
                           double beta, const Eigen::VectorXd& w) {
  const Eigen::VectorXd mu = (b * w).array() + beta;
  double reg = 0.0;
  Eigen::Index off = 0;
  for (std::size_t k = 0; k < block_sizes.size(); ++k) {
    const auto m = static_cast<Eigen::Index>(block_sizes[k]);
    reg += lambdas[k] * w.segment(off, m).cwiseAbs().sum();
    off += m;
  }
  return deviance(p, std::span<const double>(mu.data(), static_cast<std::size_t>(mu.size()))) /
             static_cast<double>(p.size()) +
         reg;
}

// Accelerated projected proximal gradient with backtracking, run to a very tight tolerance.
inline Eigen::VectorXd prox_gradient_oracle(const Eigen::MatrixXd& b,
                                            std::span<const std::size_t> sizes,
                                            const std::vector<double>& lambdas,
                                            const std::vector<double>& p, double beta) {
  const auto n = static_cast<double>(p.size());
  Eigen::VectorXd lam(b.cols());
  Eigen::Index off = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    lam.segment(off, static_cast<Eigen::Index>(sizes[k])).setConstant(lambdas[k]);
    off += static_cast<Eigen::Index>(sizes[k]);
  }
  Eigen::Map<const Eigen::VectorXd> pv(p.data(), static_cast<Eigen::Index>(p.size()));
  auto smooth = [&](const Eigen::VectorXd& w) {
    const Eigen::VectorXd mu = (b * w).array() + beta;
    return deviance(p, std::span<const double>(mu.data(), p.size())) / n;
  };
  auto grad = [&](const Eigen::VectorXd& w) {
    const Eigen::VectorXd mu = (b * w).array() + beta;
    return Eigen::VectorXd(b.transpose() * (1.0 - pv.array() / mu.array()).matrix() / n);
  };
  Eigen::VectorXd w = Eigen::VectorXd::Zero(b.cols()), y = w;
  double t = 1.0, step = 1.0;
  for (int it = 0; it < 300000; ++it) {
    const Eigen::VectorXd g = grad(y);
    const double fy = smooth(y);
    Eigen::VectorXd next;
    for (;;) {
      next = (y - step * g - step * lam).cwiseMax(0.0);
      const Eigen::VectorXd d = next - y;
      if (smooth(next) <= fy + g.dot(d) + d.squaredNorm() / (2 * step)) break;
      step *= 0.5;
    }
    const Eigen::VectorXd prev = w;
    w = next;
    // Gradient-based restart keeps the momentum from oscillating.
    if ((y - w).dot(w - prev) > 0.0) {
      t = 1.0;
      y = w;
    } else {
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = w + ((t - 1.0) / tn) * (w - prev);
      t = tn;
    }
    const Eigen::VectorXd gw = grad(w);
    const Eigen::VectorXd mapped = (w - (w - gw - lam).cwiseMax(0.0));
    if (mapped.lpNorm<Eigen::Infinity>() < 1e-11) break;
  }
  return w;
}

}  // namespace psfmix::oracle
