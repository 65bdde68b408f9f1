#include "psfmix/spectral.hpp"

#include <cmath>
#include <numbers>

#include "psfmix/errors.hpp"

namespace psfmix {

namespace {

void check_symmetric(const kernels::AxisStencil& st, std::size_t n) {
  if (st.boundary != kernels::Boundary::Reflexive)
    throw ValidationError("spectral path needs reflexive stencils");
  if (st.taps.size() % 2 != 1 || st.half_width() > n)
    throw ValidationError("spectral path: stencil wider than the axis");
  const std::size_t h = st.half_width();
  for (std::size_t d = 1; d <= h; ++d)
    if (st.taps[h + d] != st.taps[h - d])
      throw ValidationError("spectral path refuses an asymmetric kernel");
}

// Orthonormal DCT-II matrix, C[k][i] = s_k cos(pi k (i + 1/2) / n).
Eigen::MatrixXd dct_matrix(std::size_t n) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const double nn = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = std::sqrt((k == 0 ? 1.0 : 2.0) / nn);
    for (std::size_t i = 0; i < n; ++i)
      c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          s * std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(i) + 0.5) / nn);
  }
  return c;
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

std::vector<double> reflexive_axis_eigenvalues(const kernels::AxisStencil& st, std::size_t n) {
  check_symmetric(st, n);
  const std::size_t h = st.half_width();
  std::vector<double> ev(n);
  for (std::size_t k = 0; k < n; ++k) {
    double v = st.taps[h];
    for (std::size_t d = 1; d <= h; ++d)
      v += 2.0 * st.taps[h + d] *
           std::cos(std::numbers::pi * static_cast<double>(k * d) / static_cast<double>(n));
    ev[k] = v;
  }
  return ev;
}

SpectralOperator::SpectralOperator(const std::array<kernels::AxisStencil, 3>& stencils,
                                   kernels::Dims dims)
    : dims_(dims) {
  for (int a = 0; a < 3; ++a) {
    check_symmetric(stencils[static_cast<std::size_t>(a)], dims.axis_length(a));
    basis_[static_cast<std::size_t>(a)] = dct_matrix(dims.axis_length(a));
  }
  const std::size_t total = dims.size();

  // First column of B (impulse at pixel 0) against the transform of the impulse.
  std::vector<double> e0(total, 0.0), col(total), tmp(total);
  e0[0] = 1.0;
  kernels::parallel::apply_axis(stencils[2], dims, 2, false, e0, col);
  kernels::parallel::apply_axis(stencils[1], dims, 1, false, col, tmp);
  kernels::parallel::apply_axis(stencils[0], dims, 0, false, tmp, col);
  std::vector<double> num(total), den(total);
  dct(col, num);
  dct(e0, den);
  eigenvalues_.resize(total);
  for (std::size_t i = 0; i < total; ++i) eigenvalues_[i] = num[i] / den[i];
}

// One transform pass per axis. With j = (s ny + r) nx + c the x axis is the
// fastest index, so the volume viewed as a row-major (nz ny) x nx matrix
// takes X C^T; the z axis is the slowest, a row-major nz x (ny nx) matrix
// takes C X; the y axis is handled slice by slice.
void SpectralOperator::transform(std::span<const double> x, std::span<double> out,
                                 bool inverse) const {
  const std::size_t n = dims_.size();
  if (x.size() != n || out.size() != n) throw ValidationError("dct: size mismatch");
  const auto nz = static_cast<Eigen::Index>(dims_.nz), ny = static_cast<Eigen::Index>(dims_.ny),
             nx = static_cast<Eigen::Index>(dims_.nx);
  std::vector<double> tmp(n);
  Eigen::Map<const RowMajor> in_x(x.data(), nz * ny, nx);
  Eigen::Map<RowMajor> t_x(tmp.data(), nz * ny, nx);
  if (inverse)
    t_x.noalias() = in_x * basis_[2];
  else
    t_x.noalias() = in_x * basis_[2].transpose();
  for (Eigen::Index s = 0; s < nz; ++s) {
    Eigen::Map<const RowMajor> slice(tmp.data() + s * ny * nx, ny, nx);
    Eigen::Map<RowMajor> o(out.data() + s * ny * nx, ny, nx);
    if (inverse)
      o.noalias() = basis_[1].transpose() * slice;
    else
      o.noalias() = basis_[1] * slice;
  }
  Eigen::Map<const RowMajor> in_z(out.data(), nz, ny * nx);
  Eigen::Map<RowMajor> t_z(tmp.data(), nz, ny * nx);
  if (inverse)
    t_z.noalias() = basis_[0].transpose() * in_z;
  else
    t_z.noalias() = basis_[0] * in_z;
  std::copy(tmp.begin(), tmp.end(), out.begin());
}

void SpectralOperator::dct(std::span<const double> x, std::span<double> out) const {
  transform(x, out, false);
}

void SpectralOperator::idct(std::span<const double> x, std::span<double> out) const {
  transform(x, out, true);
}

void SpectralOperator::apply(std::span<const double> x, std::span<double> out) const {
  std::vector<double> t(dims_.size());
  dct(x, t);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] *= eigenvalues_[i];
  idct(t, out);
}

void SpectralOperator::ls_solve(std::span<const double> rhs, std::span<double> out) const {
  std::vector<double> t(dims_.size());
  dct(rhs, t);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] /= 2.0 + eigenvalues_[i] * eigenvalues_[i];
  idct(t, out);
}

}  // namespace psfmix
