#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "psfmix/dictionary.hpp"
#include "psfmix/kernels.hpp"

namespace psfmix {

/// Linear map B_k from the weights of one dictionary kernel to pixel values,
/// entry (j, m) = psi_k(x_j - x0 - x_km).
class KernelOperator {
 public:
  virtual ~KernelOperator() = default;
  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;
  virtual void apply(std::span<const double> w, std::span<double> out) const = 0;
  virtual void adjoint(std::span<const double> v, std::span<double> out) const = 0;
  /// Materialized by applying the operator to unit vectors.
  Eigen::MatrixXd dense() const;
};

inline constexpr std::size_t kMaxDenseEntries = 25'000'000;

/// Dense N x M_k matrix of exact entries.
Eigen::MatrixXd blur_matrix_dense(const DictionaryKernel& kernel, const GridGeometry& image,
                                  Vec3 x0);

class DenseBlur final : public KernelOperator {
 public:
  explicit DenseBlur(Eigen::MatrixXd matrix) : b_(std::move(matrix)) {}
  std::size_t rows() const override { return static_cast<std::size_t>(b_.rows()); }
  std::size_t cols() const override { return static_cast<std::size_t>(b_.cols()); }
  void apply(std::span<const double> w, std::span<double> out) const override;
  void adjoint(std::span<const double> v, std::span<double> out) const override;
  const Eigen::MatrixXd& matrix() const { return b_; }

 private:
  Eigen::MatrixXd b_;
};

/// Per-axis stencils of a Gaussian kernel placed on the pixels of `atoms`,
/// observed on `image` (same shape and samplings) with source at x0. The
/// normalization constant rides on the z stencil. Reflexive stencils span the
/// whole axis and need the atom lattice to coincide with the image lattice.
std::array<kernels::AxisStencil, 3> separable_stencils(const SingleGaussianParams& params,
                                                       const GridGeometry& atoms,
                                                       const GridGeometry& image, Vec3 x0,
                                                       kernels::Boundary boundary);

/// Digital-placement operator evaluated as three 1-D passes. Atoms may be a
/// subset of the pixels; they are scattered to the grid before the passes.
class SeparableBlur final : public KernelOperator {
 public:
  SeparableBlur(const DictionaryKernel& kernel, const GridGeometry& atoms,
                const GridGeometry& image, Vec3 x0, kernels::Boundary boundary);
  std::size_t rows() const override { return dims_.size(); }
  std::size_t cols() const override { return full_ ? dims_.size() : pixels_.size(); }
  void apply(std::span<const double> w, std::span<double> out) const override;
  void adjoint(std::span<const double> v, std::span<double> out) const override;
  const std::array<kernels::AxisStencil, 3>& stencils() const { return stencils_; }
  kernels::Dims dims() const { return dims_; }

 private:
  kernels::Dims dims_;
  std::array<kernels::AxisStencil, 3> stencils_;
  std::vector<std::size_t> pixels_;
  bool full_ = false;
};

/// Direct summation over the atom list; works for any placement.
class AtomListBlur final : public KernelOperator {
 public:
  AtomListBlur(const DictionaryKernel& kernel, const GridGeometry& image, Vec3 x0);
  std::size_t rows() const override { return image_.size(); }
  std::size_t cols() const override { return centres_.size(); }
  void apply(std::span<const double> w, std::span<double> out) const override;
  void adjoint(std::span<const double> v, std::span<double> out) const override;

 private:
  GridGeometry image_;
  SingleGaussianParams params_;
  std::vector<Vec3> centres_;  // x_km + x0
};

enum class BlurMode {
  Exact,      // true entries (zero outside the grid)
  Reflexive,  // mirrored at the half-sample boundary, as diagonalized by the DCT
};

/// Chooses the separable path for digital dictionaries on a matching grid and
/// direct summation otherwise. Reflexive mode requires the separable path.
std::unique_ptr<KernelOperator> make_blur(const Dictionary& dictionary, std::size_t k,
                                          const GridGeometry& image, Vec3 x0, BlurMode mode);

/// Stacked operator [B_1 ... B_K] acting on the concatenated weight vector.
class MixtureOperator {
 public:
  MixtureOperator() = default;
  MixtureOperator(const Dictionary& dictionary, const GridGeometry& image, Vec3 x0, BlurMode mode);
  explicit MixtureOperator(std::vector<std::unique_ptr<KernelOperator>> blocks);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return offsets_.back(); }
  std::size_t n_blocks() const { return blocks_.size(); }
  const KernelOperator& block(std::size_t k) const { return *blocks_[k]; }
  std::size_t offset(std::size_t k) const { return offsets_[k]; }

  /// out = sum_k B_k w_k
  void apply(std::span<const double> w, std::span<double> out) const;
  void adjoint(std::span<const double> v, std::span<double> out) const;
  Eigen::MatrixXd dense() const;

 private:
  std::vector<std::unique_ptr<KernelOperator>> blocks_;
  std::vector<std::size_t> offsets_{0};
  std::size_t rows_ = 0;
};

}  // namespace psfmix
