#pragma once

#include <Eigen/Dense>
#include <array>
#include <span>
#include <vector>

#include "psfmix/kernels.hpp"

namespace psfmix {

/// Separable, centrally symmetric blur with reflexive boundaries, diagonalized
/// by the 3-D DCT-II. Eigenvalues come from the ratio DCT(B e_0) / DCT(e_0).
/// The transform is orthonormal and applied as one dense matrix per axis.
class SpectralOperator {
 public:
  SpectralOperator(const std::array<kernels::AxisStencil, 3>& stencils, kernels::Dims dims);
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  kernels::Dims dims() const { return dims_; }

  /// out = B x through the transform domain.
  void apply(std::span<const double> x, std::span<double> out) const;
  /// out = (2 I + B^T B)^{-1} rhs.
  void ls_solve(std::span<const double> rhs, std::span<double> out) const;

  void dct(std::span<const double> x, std::span<double> out) const;
  /// Inverse (and transpose) of dct.
  void idct(std::span<const double> x, std::span<double> out) const;

 private:
  void transform(std::span<const double> x, std::span<double> out, bool inverse) const;

  kernels::Dims dims_;
  std::array<Eigen::MatrixXd, 3> basis_;  // per axis, z y x
  std::vector<double> eigenvalues_;
};

/// Closed-form eigenvalues of one reflexive axis: s_0 + 2 sum_d s_d cos(pi k d / n).
std::vector<double> reflexive_axis_eigenvalues(const kernels::AxisStencil& stencil, std::size_t n);

}  // namespace psfmix
