#include "psfmix/likelihood.hpp"

#include "psfmix/errors.hpp"
#include "psfmix/kernels.hpp"

namespace psfmix {

double deviance(std::span<const double> counts, std::span<const double> mean) {
  return kernels::parallel::deviance(counts, mean);
}

std::vector<double> mixture_mean(const MixtureOperator& op, std::span<const double> w,
                                 double background) {
  std::vector<double> mu(op.rows());
  op.apply(w, mu);
  for (double& v : mu) v += background;
  return mu;
}

std::vector<double> deviance_grad_from_mean(std::span<const double> counts,
                                            std::span<const double> mean,
                                            const MixtureOperator& op) {
  if (counts.size() != mean.size() || counts.size() != op.rows())
    throw ValidationError("deviance gradient: size mismatch");
  std::vector<double> r(counts.size());
  for (std::size_t j = 0; j < r.size(); ++j) {
    if (counts[j] > 0.0 && !(mean[j] > 0.0))
      throw DomainError("deviance gradient: nonpositive mean at a pixel with counts");
    r[j] = counts[j] > 0.0 ? 1.0 - counts[j] / mean[j] : 1.0;
  }
  std::vector<double> g(op.cols());
  op.adjoint(r, g);
  return g;
}

std::vector<double> deviance_grad_weights(std::span<const double> counts, const MixtureOperator& op,
                                          std::span<const double> w, double background) {
  const auto mu = mixture_mean(op, w, background);
  return deviance_grad_from_mean(counts, mu, op);
}

void poisson_prox(std::span<const double> candidate, std::span<const double> counts, double rho,
                  std::size_t n_pixels, std::span<double> out) {
  if (!(rho > 0.0)) throw ValidationError("poisson_prox: step must be > 0");
  if (n_pixels == 0) throw ValidationError("poisson_prox: pixel count must be > 0");
  kernels::parallel::poisson_prox(candidate, counts, rho / static_cast<double>(n_pixels), out);
}

}  // namespace psfmix
