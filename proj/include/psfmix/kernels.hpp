#pragma once

// Data-parallel inner loops shared by the forward model, the likelihood and
// the solvers. Every kernel exists twice: a plain serial reference used by the
// tests and the OpenMP version used by the library. The two must agree
// bit-for-bit; reductions are blocked with a fixed block size so the result
// does not depend on the thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "psfmix/imaging.hpp"

namespace psfmix::kernels {

/// Grid extents in vectorization order.
struct Dims {
  std::size_t nz = 1;
  std::size_t ny = 1;
  std::size_t nx = 1;
  std::size_t size() const { return nz * ny * nx; }
  std::size_t axis_length(int axis) const { return axis == 0 ? nz : (axis == 1 ? ny : nx); }
  static Dims of(const GridGeometry& g) { return {g.n_slices(), g.n_rows(), g.n_cols()}; }
};

/// Separable 1-D operator along one axis. For Boundary::Zero the stencil holds
/// offsets -(n-1)..(n-1) (index d + n - 1) and the operator is the Toeplitz
/// matrix T[i][m] = s[i - m]. For Boundary::Reflexive the stencil is symmetric
/// with half-width h <= n, stored as offsets -h..h, and indices falling outside
/// [0, n) are mirrored about the half-sample boundary.
enum class Boundary { Zero, Reflexive };

struct AxisStencil {
  Boundary boundary = Boundary::Zero;
  std::vector<double> taps;
  std::size_t half_width() const { return taps.size() / 2; }
};

/// Axis-aligned Gaussian atom evaluated at pixel centres.
struct GaussianAtom {
  Vec3 centre;
  double amplitude = 0.0;  // weight times normalization constant
  double sigma_xy = 1.0;   // um
  double sigma_z = 1.0;    // um
};

inline constexpr std::size_t kReductionBlock = 1024;

namespace serial {

double deviance(std::span<const double> counts, std::span<const double> mean);
void poisson_prox(std::span<const double> candidate, std::span<const double> counts,
                  double step_over_n, std::span<double> out);
void apply_axis(const AxisStencil& stencil, const Dims& dims, int axis, bool adjoint,
                std::span<const double> in, std::span<double> out);
void accumulate_gaussians(const GridGeometry& geometry, std::span<const GaussianAtom> atoms,
                          std::span<double> out);
/// |sum_q w_q J0(a r rho_q) exp(-i b z rho_q^2)|^2 for every (z, r) pair;
/// out is laid out [z][r].
void bw_intensity(std::span<const double> radii, std::span<const double> axial, double bessel_scale,
                  double phase_scale, std::span<const double> nodes, std::span<const double> weights,
                  std::span<double> out);

}  // namespace serial

namespace parallel {

double deviance(std::span<const double> counts, std::span<const double> mean);
void poisson_prox(std::span<const double> candidate, std::span<const double> counts,
                  double step_over_n, std::span<double> out);
void apply_axis(const AxisStencil& stencil, const Dims& dims, int axis, bool adjoint,
                std::span<const double> in, std::span<double> out);
void accumulate_gaussians(const GridGeometry& geometry, std::span<const GaussianAtom> atoms,
                          std::span<double> out);
void bw_intensity(std::span<const double> radii, std::span<const double> axial, double bessel_scale,
                  double phase_scale, std::span<const double> nodes, std::span<const double> weights,
                  std::span<double> out);

}  // namespace parallel

/// Per-pixel deviance term with the convention 0 log 0 = 0. Throws DomainError
/// when mean <= 0 at a pixel with positive count.
double deviance_term(double count, double mean);

/// Positive root of mu^2 + (t - c) mu - t p = 0, t = rho / N.
double poisson_prox_scalar(double candidate, double count, double step_over_n);

}  // namespace psfmix::kernels
