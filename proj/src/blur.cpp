#include "psfmix/blur.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "psfmix/errors.hpp"

namespace psfmix {

namespace kn = kernels;

Eigen::MatrixXd KernelOperator::dense() const {
  if (rows() * cols() > kMaxDenseEntries)
    throw ValidationError("dense blur matrix too large (" + std::to_string(rows()) + " x " +
                          std::to_string(cols()) + ")");
  Eigen::MatrixXd m(rows(), cols());
  std::vector<double> e(cols(), 0.0), col(rows());
  for (std::size_t i = 0; i < cols(); ++i) {
    e[i] = 1.0;
    apply(e, col);
    e[i] = 0.0;
    for (std::size_t j = 0; j < rows(); ++j) m(j, i) = col[j];
  }
  return m;
}

Eigen::MatrixXd blur_matrix_dense(const DictionaryKernel& kernel, const GridGeometry& image,
                                  Vec3 x0) {
  const std::size_t n = image.size(), m = kernel.size();
  if (n * m > kMaxDenseEntries)
    throw ValidationError("dense blur matrix too large (" + std::to_string(n) + " x " +
                          std::to_string(m) + ")");
  Eigen::MatrixXd b(n, m);
  for (std::size_t j = 0; j < n; ++j) {
    const Vec3 xj = pixel_center(image, j) - x0;
    for (std::size_t a = 0; a < m; ++a) b(j, a) = eval_sg(kernel.params, xj - kernel.positions[a]);
  }
  return b;
}

void DenseBlur::apply(std::span<const double> w, std::span<double> out) const {
  Eigen::Map<const Eigen::VectorXd> wv(w.data(), b_.cols());
  Eigen::Map<Eigen::VectorXd>(out.data(), b_.rows()).noalias() = b_ * wv;
}

void DenseBlur::adjoint(std::span<const double> v, std::span<double> out) const {
  Eigen::Map<const Eigen::VectorXd> vv(v.data(), b_.rows());
  Eigen::Map<Eigen::VectorXd>(out.data(), b_.cols()).noalias() = b_.transpose() * vv;
}

namespace {

bool same_lattice(const GridGeometry& a, const GridGeometry& b) {
  return a.n_slices() == b.n_slices() && a.n_rows() == b.n_rows() && a.n_cols() == b.n_cols() &&
         a.lateral_sampling_nm() == b.lateral_sampling_nm() &&
         a.axial_sampling_nm() == b.axial_sampling_nm();
}

kn::AxisStencil axis_stencil(std::size_t n, double step, double shift, double sigma, double amp,
                             kn::Boundary boundary) {
  kn::AxisStencil st;
  st.boundary = boundary;
  const double inv = 0.5 / (sigma * sigma);
  const long h = static_cast<long>(n) - 1;
  st.taps.resize(static_cast<std::size_t>(2 * h + 1));
  for (long d = -h; d <= h; ++d) {
    const double u = static_cast<double>(d) * step + shift;
    st.taps[static_cast<std::size_t>(d + h)] = amp * std::exp(-inv * u * u);
  }
  return st;
}

}  // namespace

std::array<kn::AxisStencil, 3> separable_stencils(const SingleGaussianParams& params,
                                                  const GridGeometry& atoms,
                                                  const GridGeometry& image, Vec3 x0,
                                                  kn::Boundary boundary) {
  params.validate();
  if (!same_lattice(atoms, image))
    throw ValidationError("separable blur: atom and image grids differ");
  const Vec3 e = (image.origin() - atoms.origin()) - x0;
  if (boundary == kn::Boundary::Reflexive &&
      (std::abs(e.x) > 1e-12 || std::abs(e.y) > 1e-12 || std::abs(e.z) > 1e-12))
    throw ValidationError("reflexive blur needs the atom lattice on the image lattice");
  const double sxy = params.sigma_xy_um(), sz = params.sigma_z_um();
  return {axis_stencil(image.n_slices(), image.dz_um(), e.z, sz, params.normalization(), boundary),
          axis_stencil(image.n_rows(), image.dxy_um(), e.y, sxy, 1.0, boundary),
          axis_stencil(image.n_cols(), image.dxy_um(), e.x, sxy, 1.0, boundary)};
}

SeparableBlur::SeparableBlur(const DictionaryKernel& kernel, const GridGeometry& atoms,
                             const GridGeometry& image, Vec3 x0, kn::Boundary boundary)
    : dims_(kn::Dims::of(image)),
      stencils_(separable_stencils(kernel.params, atoms, image, x0, boundary)),
      pixels_(kernel.pixel_indices) {
  if (pixels_.size() != kernel.size())
    throw ValidationError("separable blur needs pixel indices for every atom");
  full_ = pixels_.size() == dims_.size();
  for (std::size_t i = 0; full_ && i < pixels_.size(); ++i) full_ = pixels_[i] == i;
  for (std::size_t p : pixels_)
    if (p >= dims_.size()) throw ValidationError("separable blur: atom pixel out of range");
}

void SeparableBlur::apply(std::span<const double> w, std::span<double> out) const {
  if (w.size() != cols() || out.size() != rows())
    throw ValidationError("SeparableBlur::apply: size mismatch");
  std::vector<double> a(dims_.size(), 0.0), b(dims_.size());
  if (full_) {
    std::copy(w.begin(), w.end(), a.begin());
  } else {
    for (std::size_t i = 0; i < pixels_.size(); ++i) a[pixels_[i]] += w[i];
  }
  kn::parallel::apply_axis(stencils_[2], dims_, 2, false, a, b);
  kn::parallel::apply_axis(stencils_[1], dims_, 1, false, b, a);
  kn::parallel::apply_axis(stencils_[0], dims_, 0, false, a, out);
}

void SeparableBlur::adjoint(std::span<const double> v, std::span<double> out) const {
  if (v.size() != rows() || out.size() != cols())
    throw ValidationError("SeparableBlur::adjoint: size mismatch");
  std::vector<double> a(dims_.size()), b(dims_.size());
  kn::parallel::apply_axis(stencils_[0], dims_, 0, true, v, a);
  kn::parallel::apply_axis(stencils_[1], dims_, 1, true, a, b);
  if (full_) {
    kn::parallel::apply_axis(stencils_[2], dims_, 2, true, b, out);
    return;
  }
  kn::parallel::apply_axis(stencils_[2], dims_, 2, true, b, a);
  for (std::size_t i = 0; i < pixels_.size(); ++i) out[i] = a[pixels_[i]];
}

AtomListBlur::AtomListBlur(const DictionaryKernel& kernel, const GridGeometry& image, Vec3 x0)
    : image_(image), params_(kernel.params) {
  params_.validate();
  centres_.reserve(kernel.size());
  for (const auto& p : kernel.positions) centres_.push_back(p + x0);
}

void AtomListBlur::apply(std::span<const double> w, std::span<double> out) const {
  if (w.size() != cols() || out.size() != rows())
    throw ValidationError("AtomListBlur::apply: size mismatch");
  std::vector<kn::GaussianAtom> atoms;
  const double c = params_.normalization();
  for (std::size_t m = 0; m < centres_.size(); ++m)
    if (w[m] != 0.0)
      atoms.push_back({centres_[m], c * w[m], params_.sigma_xy_um(), params_.sigma_z_um()});
  std::fill(out.begin(), out.end(), 0.0);
  kn::parallel::accumulate_gaussians(image_, atoms, out);
}

void AtomListBlur::adjoint(std::span<const double> v, std::span<double> out) const {
  if (v.size() != rows() || out.size() != cols())
    throw ValidationError("AtomListBlur::adjoint: size mismatch");
  const auto& g = image_;
  const double c = params_.normalization();
  const double ixy = 0.5 / (params_.sigma_xy_um() * params_.sigma_xy_um());
  const double iz = 0.5 / (params_.sigma_z_um() * params_.sigma_z_um());
  const long n_atoms = static_cast<long>(centres_.size());
#pragma omp parallel if (n_atoms > 16)
  {
    std::vector<double> gx(g.n_cols()), gy(g.n_rows());
#pragma omp for schedule(static)
    for (long m = 0; m < n_atoms; ++m) {
      const Vec3 x = centres_[static_cast<std::size_t>(m)];
      for (std::size_t col = 0; col < g.n_cols(); ++col) {
        const double d = g.x_at(col) - x.x;
        gx[col] = std::exp(-ixy * d * d);
      }
      for (std::size_t r = 0; r < g.n_rows(); ++r) {
        const double d = g.y_at(r) - x.y;
        gy[r] = std::exp(-ixy * d * d);
      }
      double acc = 0.0;
      for (std::size_t s = 0; s < g.n_slices(); ++s) {
        const double dz = g.z_at(s) - x.z;
        const double gz = std::exp(-iz * dz * dz);
        for (std::size_t r = 0; r < g.n_rows(); ++r) {
          const double* line = v.data() + g.index(s, r, 0);
          double lacc = 0.0;
          for (std::size_t col = 0; col < g.n_cols(); ++col) lacc += gx[col] * line[col];
          acc += gz * gy[r] * lacc;
        }
      }
      out[static_cast<std::size_t>(m)] = c * acc;
    }
  }
}

std::unique_ptr<KernelOperator> make_blur(const Dictionary& dictionary, std::size_t k,
                                          const GridGeometry& image, Vec3 x0, BlurMode mode) {
  if (k >= dictionary.kernels.size()) throw ValidationError("make_blur: kernel out of range");
  const auto& kernel = dictionary.kernels[k];
  const bool separable = dictionary.is_digital() && same_lattice(*dictionary.geometry, image) &&
                         kernel.pixel_indices.size() == kernel.size();
  if (mode == BlurMode::Reflexive) {
    if (!separable) throw ValidationError("reflexive blur requires a digital dictionary");
    return std::make_unique<SeparableBlur>(kernel, *dictionary.geometry, image, x0,
                                           kn::Boundary::Reflexive);
  }
  if (separable)
    return std::make_unique<SeparableBlur>(kernel, *dictionary.geometry, image, x0,
                                           kn::Boundary::Zero);
  return std::make_unique<AtomListBlur>(kernel, image, x0);
}

MixtureOperator::MixtureOperator(const Dictionary& dictionary, const GridGeometry& image, Vec3 x0,
                                 BlurMode mode) {
  std::vector<std::unique_ptr<KernelOperator>> blocks;
  for (std::size_t k = 0; k < dictionary.kernels.size(); ++k)
    blocks.push_back(make_blur(dictionary, k, image, x0, mode));
  *this = MixtureOperator(std::move(blocks));
  rows_ = image.size();
}

MixtureOperator::MixtureOperator(std::vector<std::unique_ptr<KernelOperator>> blocks)
    : blocks_(std::move(blocks)) {
  for (const auto& b : blocks_) {
    if (rows_ != 0 && b->rows() != rows_) throw ValidationError("mixture blocks disagree in rows");
    rows_ = b->rows();
    offsets_.push_back(offsets_.back() + b->cols());
  }
}

void MixtureOperator::apply(std::span<const double> w, std::span<double> out) const {
  if (w.size() != cols() || out.size() != rows())
    throw ValidationError("MixtureOperator::apply: size mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  std::vector<double> tmp(rows_);
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const auto wk = w.subspan(offsets_[k], offsets_[k + 1] - offsets_[k]);
    if (std::all_of(wk.begin(), wk.end(), [](double v) { return v == 0.0; })) continue;
    blocks_[k]->apply(wk, tmp);
    for (std::size_t j = 0; j < rows_; ++j) out[j] += tmp[j];
  }
}

void MixtureOperator::adjoint(std::span<const double> v, std::span<double> out) const {
  if (v.size() != rows() || out.size() != cols())
    throw ValidationError("MixtureOperator::adjoint: size mismatch");
  for (std::size_t k = 0; k < blocks_.size(); ++k)
    blocks_[k]->adjoint(v, out.subspan(offsets_[k], offsets_[k + 1] - offsets_[k]));
}

Eigen::MatrixXd MixtureOperator::dense() const {
  Eigen::MatrixXd m(rows(), cols());
  for (std::size_t k = 0; k < blocks_.size(); ++k)
    m.middleCols(offsets_[k], offsets_[k + 1] - offsets_[k]) = blocks_[k]->dense();
  return m;
}

}  // namespace psfmix
