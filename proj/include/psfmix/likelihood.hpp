#pragma once

#include <span>
#include <vector>

#include "psfmix/blur.hpp"

namespace psfmix {

/// sum_j p_j log(p_j / mu_j) + mu_j - p_j, with 0 log 0 = 0.
double deviance(std::span<const double> counts, std::span<const double> mean);

/// mu = B w + beta.
std::vector<double> mixture_mean(const MixtureOperator& op, std::span<const double> w,
                                 double background);

/// Gradient of the deviance of mu(w) = B w + beta: B^T (1 - p / mu).
std::vector<double> deviance_grad_weights(std::span<const double> counts, const MixtureOperator& op,
                                          std::span<const double> w, double background);
/// Same, from an already evaluated mean.
std::vector<double> deviance_grad_from_mean(std::span<const double> counts,
                                            std::span<const double> mean, const MixtureOperator& op);

/// Per-pixel minimizer of (1/N) nu(p, mu) + (1/(2 rho)) (mu - c)^2.
void poisson_prox(std::span<const double> candidate, std::span<const double> counts, double rho,
                  std::size_t n_pixels, std::span<double> out);

}  // namespace psfmix
