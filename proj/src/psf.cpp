#include "psfmix/psf.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "psfmix/errors.hpp"
#include "psfmix/kernels.hpp"

namespace psfmix {

using std::numbers::pi;

void BornWolfParams::validate() const {
  if (!(wavelength_nm > 0.0) || !(numerical_aperture > 0.0) || !(refractive_index > 0.0) ||
      !std::isfinite(wavelength_nm) || !std::isfinite(numerical_aperture) ||
      !std::isfinite(refractive_index))
    throw ValidationError("Born-Wolf parameters must be finite and > 0");
}

double BornWolfParams::wavenumber() const {
  return 2.0 * pi / (wavelength_nm * 1e-3 * refractive_index);
}

RadialQuadrature RadialQuadrature::simpson(std::size_t panels) {
  if (panels < 2 || panels % 2 != 0) throw ValidationError("Simpson rule needs an even panel count");
  RadialQuadrature q;
  q.nodes.resize(panels + 1);
  q.weights.resize(panels + 1);
  const double h = 1.0 / static_cast<double>(panels);
  for (std::size_t i = 0; i <= panels; ++i) {
    const double rho = static_cast<double>(i) * h;
    const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    q.nodes[i] = rho;
    q.weights[i] = w * h / 3.0 * rho;
  }
  return q;
}

double bw_intensity_fixed(const BornWolfParams& params, double r_um, double z_um,
                          std::size_t panels) {
  const auto q = RadialQuadrature::simpson(panels);
  const double a = params.bessel_scale() * r_um;
  const double b = params.phase_scale() * z_um;
  double re = 0.0, im = 0.0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const double rho = q.nodes[i];
    const double radial = q.weights[i] * ::j0(a * rho);
    re += radial * std::cos(b * rho * rho);
    im -= radial * std::sin(b * rho * rho);
  }
  return re * re + im * im;
}

double bw_intensity_unnormalized(const BornWolfParams& params, double r_um, double z_um) {
  params.validate();
  if (!std::isfinite(r_um) || !std::isfinite(z_um))
    throw ValidationError("Born-Wolf evaluation at a non-finite point");
  std::size_t panels = kBornWolfPanels;
  double prev = bw_intensity_fixed(params, r_um, z_um, panels);
  // Absolute floor relative to the focal peak (1/4) so dark rings terminate.
  constexpr double kFloor = 0.25 * 1e-15;
  for (int refinements = 0; refinements < 8; ++refinements) {
    panels *= 2;
    const double next = bw_intensity_fixed(params, r_um, z_um, panels);
    if (std::abs(next - prev) <= 1e-9 * std::abs(next) + kFloor) return next;
    prev = next;
  }
  return prev;
}

double bw_box_integral(const BornWolfParams& params, const GridGeometry& geometry) {
  params.validate();
  const double dxy = geometry.dxy_um();
  const double dz = geometry.dz_um();
  const long half = static_cast<long>(std::floor(3.0 / dxy + 1e-9));
  // Radii depend on i^2 + j^2 only; evaluate each distinct value once.
  std::map<long, double> multiplicity;
  for (long i = -half; i <= half; ++i)
    for (long j = -half; j <= half; ++j) multiplicity[i * i + j * j] += 1.0;
  std::vector<double> radii, mult;
  radii.reserve(multiplicity.size());
  for (const auto& [k, m] : multiplicity) {
    radii.push_back(std::sqrt(static_cast<double>(k)) * dxy);
    mult.push_back(m);
  }
  const std::size_t ns = geometry.n_slices();
  std::vector<double> axial(ns);
  for (std::size_t s = 0; s < ns; ++s)
    axial[s] = (static_cast<double>(s) - 0.5 * static_cast<double>(ns - 1)) * dz;
  const auto q = RadialQuadrature::simpson(kBornWolfPanels);
  std::vector<double> values(radii.size() * ns);
  kernels::parallel::bw_intensity(radii, axial, params.bessel_scale(), params.phase_scale(), q.nodes,
                                  q.weights, values);
  double total = 0.0;
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t i = 0; i < radii.size(); ++i) total += mult[i] * values[s * radii.size() + i];
  return total * dxy * dxy * dz;
}

BornWolfPsf make_born_wolf(const BornWolfParams& params, const GridGeometry& geometry) {
  const double integral = bw_box_integral(params, geometry);
  if (!(integral > 0.0)) throw NumericalError("Born-Wolf normalization integral vanished");
  return {params, 1.0 / integral};
}

double eval_bw(const BornWolfPsf& psf, Vec3 x) {
  const double r = std::hypot(x.x, x.y);
  return psf.normalization * bw_intensity_unnormalized(psf.params, r, x.z);
}

void bw_on_grid(const BornWolfPsf& psf, const GridGeometry& g, Vec3 x0, double scale,
                std::span<double> out) {
  if (out.size() != g.size()) throw ValidationError("bw_on_grid: output size mismatch");
  psf.params.validate();
  const std::size_t nlat = g.n_rows() * g.n_cols();
  std::vector<double> radii(nlat), axial(g.n_slices());
  for (std::size_t r = 0; r < g.n_rows(); ++r)
    for (std::size_t c = 0; c < g.n_cols(); ++c)
      radii[r * g.n_cols() + c] = std::hypot(g.x_at(c) - x0.x, g.y_at(r) - x0.y);
  for (std::size_t s = 0; s < g.n_slices(); ++s) axial[s] = g.z_at(s) - x0.z;
  static const RadialQuadrature quad = RadialQuadrature::simpson(kBornWolfPanels);
  kernels::parallel::bw_intensity(radii, axial, psf.params.bessel_scale(), psf.params.phase_scale(),
                                  quad.nodes, quad.weights, out);
  const double k = scale * psf.normalization;
  for (double& v : out) v *= k;
}

BornWolfTable::BornWolfTable(const BornWolfPsf& psf, double r_max_um, double z_min_um,
                             double z_max_um, double r_step_um, double z_step_um)
    : psf_(psf), r_step_(r_step_um), z_step_(z_step_um) {
  if (!(r_step_um > 0.0) || !(z_step_um > 0.0) || !(r_max_um >= 0.0) || !(z_max_um >= z_min_um))
    throw ValidationError("Born-Wolf table: invalid extent");
  nr_ = static_cast<std::size_t>(std::ceil(r_max_um / r_step_um)) + 3;
  z_min_ = z_min_um - 2.0 * z_step_um;
  nz_ = static_cast<std::size_t>(std::ceil((z_max_um - z_min_um) / z_step_um)) + 5;
  std::vector<double> radii(nr_), axial(nz_);
  for (std::size_t i = 0; i < nr_; ++i) radii[i] = static_cast<double>(i) * r_step_;
  for (std::size_t i = 0; i < nz_; ++i) axial[i] = z_min_ + static_cast<double>(i) * z_step_;
  const auto q = RadialQuadrature::simpson(kBornWolfPanels);
  values_.resize(nr_ * nz_);
  kernels::parallel::bw_intensity(radii, axial, psf.params.bessel_scale(), psf.params.phase_scale(),
                                  q.nodes, q.weights, values_);
  for (double& v : values_) v *= psf.normalization;
}

namespace {

inline double catmull_rom(double p0, double p1, double p2, double p3, double t) {
  return p1 + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 +
                                         t * (3.0 * (p1 - p2) + p3 - p0)));
}

}  // namespace

double BornWolfTable::lookup(double r, double z) const {
  const double fr = r / r_step_;
  const double fz = (z - z_min_) / z_step_;
  const long ir = static_cast<long>(std::floor(fr));
  const long iz = static_cast<long>(std::floor(fz));
  const double tr = fr - static_cast<double>(ir);
  const double tz = fz - static_cast<double>(iz);
  const long nr = static_cast<long>(nr_), nz = static_cast<long>(nz_);
  auto rindex = [&](long i) {
    if (i < 0) i = -i;  // intensity is even in r
    return std::min(i, nr - 1);
  };
  auto zindex = [&](long i) { return std::clamp(i, 0L, nz - 1); };
  double col[4];
  for (int a = 0; a < 4; ++a) {
    const double* row = values_.data() + zindex(iz - 1 + a) * nr;
    col[a] = catmull_rom(row[rindex(ir - 1)], row[rindex(ir)], row[rindex(ir + 1)],
                         row[rindex(ir + 2)], tr);
  }
  return std::max(0.0, catmull_rom(col[0], col[1], col[2], col[3], tz));
}

double BornWolfTable::operator()(Vec3 x) const { return lookup(std::hypot(x.x, x.y), x.z); }

void BornWolfTable::on_grid(const GridGeometry& g, Vec3 x0, double scale,
                            std::span<double> out) const {
  if (out.size() != g.size()) throw ValidationError("BornWolfTable::on_grid: output size mismatch");
  const std::size_t nlat = g.n_rows() * g.n_cols();
  std::vector<double> radii(nlat);
  for (std::size_t r = 0; r < g.n_rows(); ++r)
    for (std::size_t c = 0; c < g.n_cols(); ++c)
      radii[r * g.n_cols() + c] = std::hypot(g.x_at(c) - x0.x, g.y_at(r) - x0.y);
#pragma omp parallel for schedule(static) if (g.size() > 4096)
  for (std::size_t s = 0; s < g.n_slices(); ++s) {
    const double z = g.z_at(s) - x0.z;
    for (std::size_t l = 0; l < nlat; ++l) out[s * nlat + l] = scale * lookup(radii[l], z);
  }
}

void SingleGaussianParams::validate() const {
  if (!(sigma_xy_nm > 0.0) || !(sigma_z_nm > 0.0) || !std::isfinite(sigma_xy_nm) ||
      !std::isfinite(sigma_z_nm))
    throw ValidationError("Gaussian standard deviations must be finite and > 0");
}

double SingleGaussianParams::normalization() const {
  const double sxy = sigma_xy_um(), sz = sigma_z_um();
  return 1.0 / std::sqrt(8.0 * pi * pi * pi * sxy * sxy * sxy * sxy * sz * sz);
}

double eval_sg(const SingleGaussianParams& params, Vec3 x) {
  const double sxy = params.sigma_xy_um(), sz = params.sigma_z_um();
  const double q = (x.x * x.x + x.y * x.y) / (sxy * sxy) + x.z * x.z / (sz * sz);
  return params.normalization() * std::exp(-0.5 * q);
}

SingleGaussianParams theoretical_sg(const BornWolfParams& params) {
  params.validate();
  const double k = 2.0 * std::numbers::pi / params.wavelength_nm;
  const double na = params.numerical_aperture;
  return {std::sqrt(2.0) / (k * na), 2.0 * std::sqrt(6.0) * params.refractive_index / (k * na * na)};
}

void sg_on_grid(const SingleGaussianParams& params, const GridGeometry& g, Vec3 x0, double scale,
                std::span<double> out) {
  params.validate();
  std::fill(out.begin(), out.end(), 0.0);
  const kernels::GaussianAtom atom{x0, scale * params.normalization(), params.sigma_xy_um(),
                                   params.sigma_z_um()};
  kernels::parallel::accumulate_gaussians(g, std::span(&atom, 1), out);
}

}  // namespace psfmix
