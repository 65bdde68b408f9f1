#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "psfmix/imaging.hpp"

namespace psfmix {

/// Scalar Born-Wolf diffraction model of an ideal objective.
struct BornWolfParams {
  double wavelength_nm = 0.0;
  double numerical_aperture = 0.0;
  double refractive_index = 0.0;

  void validate() const;
  /// 2 pi / (lambda n_i), in 1/um.
  double wavenumber() const;
  /// Scale of the Bessel argument: k0 * NA (1/um).
  double bessel_scale() const { return wavenumber() * numerical_aperture; }
  /// Phase(rho, z) = phase_scale * z * rho^2 with k0 NA^2 / (2 n_i) (1/um).
  double phase_scale() const {
    return wavenumber() * numerical_aperture * numerical_aperture / (2.0 * refractive_index);
  }
  /// NA / n_i above 1 lies outside the model's validity.
  bool physically_valid() const { return numerical_aperture <= refractive_index; }
};

/// Composite Simpson rule on [0, 1] with the radial Jacobian rho folded into
/// the weights.
struct RadialQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
  static RadialQuadrature simpson(std::size_t panels);
};

inline constexpr std::size_t kBornWolfPanels = 512;

/// |int_0^1 J0(k0 r NA rho) exp(-i Phi(rho, z)) rho d rho|^2, without the
/// normalization constant. Simpson with 512 panels, doubled until successive
/// values agree to 1e-9 relative.
double bw_intensity_unnormalized(const BornWolfParams& params, double r_um, double z_um);
/// Fixed panel count, no refinement (used as an oracle in tests).
double bw_intensity_fixed(const BornWolfParams& params, double r_um, double z_um,
                          std::size_t panels);

/// Born-Wolf PSF with its normalization constant. The constant makes the
/// kernel integrate to one over a bounded box (lateral +-3 um, axially the
/// extent of the stack) by midpoint quadrature at the grid resolution.
struct BornWolfPsf {
  BornWolfParams params;
  double normalization = 1.0;  // C_BW, 1/um^3
};

BornWolfPsf make_born_wolf(const BornWolfParams& params, const GridGeometry& geometry);
/// Box integral of the unnormalized intensity used to fix C_BW.
double bw_box_integral(const BornWolfParams& params, const GridGeometry& geometry);

double eval_bw(const BornWolfPsf& psf, Vec3 x);

/// Evaluates scale * C_BW * I(x_j - x0) on every pixel centre. Uses the
/// tabulated batch kernel (one Bessel table per lateral pixel, one phase table
/// per slice) at the fixed 512-panel rule.
void bw_on_grid(const BornWolfPsf& psf, const GridGeometry& geometry, Vec3 x0, double scale,
                std::span<double> out);

/// Precomputed Born-Wolf intensity over (r, z) with Catmull-Rom bicubic
/// interpolation, for repeated evaluation at fixed optical parameters.
class BornWolfTable {
 public:
  BornWolfTable(const BornWolfPsf& psf, double r_max_um, double z_min_um, double z_max_um,
                double r_step_um = 0.004, double z_step_um = 0.010);

  double operator()(Vec3 x) const;
  void on_grid(const GridGeometry& geometry, Vec3 x0, double scale, std::span<double> out) const;
  const BornWolfPsf& psf() const { return psf_; }

 private:
  double lookup(double r, double z) const;

  BornWolfPsf psf_;
  double r_step_, z_step_, z_min_;
  std::size_t nr_, nz_;
  std::vector<double> values_;  // [z][r], normalized
};

/// Axis-aligned Gaussian kernel, standard deviations in nm.
struct SingleGaussianParams {
  double sigma_xy_nm = 0.0;
  double sigma_z_nm = 0.0;

  void validate() const;
  double sigma_xy_um() const { return sigma_xy_nm * 1e-3; }
  double sigma_z_um() const { return sigma_z_nm * 1e-3; }
  /// (8 pi^3 sigma_xy^4 sigma_z^2)^(-1/2), 1/um^3.
  double normalization() const;
  friend bool operator==(const SingleGaussianParams&, const SingleGaussianParams&) = default;
};

double eval_sg(const SingleGaussianParams& params, Vec3 x);

/// Theoretical widefield Gaussian approximation (paraxial, k = 2 pi / lambda):
/// sigma_xy = sqrt(2) / (k NA), sigma_z = 2 sqrt(6) n_i / (k NA^2).
SingleGaussianParams theoretical_sg(const BornWolfParams& params);

/// scale * psi_SG(x_j - x0) over the grid (separable evaluation).
void sg_on_grid(const SingleGaussianParams& params, const GridGeometry& geometry, Vec3 x0,
                double scale, std::span<double> out);

}  // namespace psfmix
