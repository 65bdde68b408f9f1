#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace psfmix {

/// Point or displacement in physical space, micrometres.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

/// Decoded (slice, row, column) pixel index.
struct PixelIndex {
  std::size_t slice = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

/// Sampling grid of an image stack. Samplings are stored in nm as given in
/// acquisition tables; every position the library hands out is in um.
///
/// Vectorization order is slice-major, then row, then column:
/// j = s*H*W + r*W + c. Column runs along x, row along y, slice along z.
class GridGeometry {
 public:
  GridGeometry() = default;
  GridGeometry(std::size_t n_slices, std::size_t n_rows, std::size_t n_cols,
               double lateral_sampling_nm, double axial_sampling_nm, Vec3 origin_um = {});

  std::size_t n_slices() const { return n_slices_; }
  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return n_cols_; }
  std::size_t size() const { return n_slices_ * n_rows_ * n_cols_; }
  double lateral_sampling_nm() const { return dxy_nm_; }
  double axial_sampling_nm() const { return dz_nm_; }
  double dxy_um() const { return dxy_nm_ * 1e-3; }
  double dz_um() const { return dz_nm_ * 1e-3; }
  Vec3 origin() const { return origin_; }
  double voxel_volume_um3() const { return dxy_um() * dxy_um() * dz_um(); }

  std::size_t index(std::size_t s, std::size_t r, std::size_t c) const {
    return (s * n_rows_ + r) * n_cols_ + c;
  }
  PixelIndex decode(std::size_t j) const;

  // Coordinate of the given column / row / slice centre along its axis.
  double x_at(std::size_t c) const { return origin_.x + static_cast<double>(c) * dxy_um(); }
  double y_at(std::size_t r) const { return origin_.y + static_cast<double>(r) * dxy_um(); }
  double z_at(std::size_t s) const { return origin_.z + static_cast<double>(s) * dz_um(); }

  /// Extent of pixel centres per axis, {min, max}.
  Vec3 min_corner() const { return origin_; }
  Vec3 max_corner() const;
  Vec3 centre() const { return 0.5 * (min_corner() + max_corner()); }

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;

 private:
  std::size_t n_slices_ = 1;
  std::size_t n_rows_ = 1;
  std::size_t n_cols_ = 1;
  double dxy_nm_ = 1.0;
  double dz_nm_ = 1.0;
  Vec3 origin_{};
};

Vec3 pixel_center(const GridGeometry& geometry, std::size_t j);

/// Affine photon-to-grey-value camera model.
struct CameraModel {
  double quantum_efficiency = 1.0;  // q in (0, 1]
  double gain = 1.0;                // m
  double adu_factor = 1.0;          // A
  double bias = 0.0;                // b, grey values
  double exposure_ms = 1.0;         // t_E
  double pixel_area_um2 = 1.0;      // a

  void validate() const;
  /// Spatio-temporal integration volume c = a * t_E.
  double integration_volume() const { return pixel_area_um2 * exposure_ms; }
  double slope() const { return quantum_efficiency * gain / adu_factor; }
};

CameraModel make_camera(double q, double m, double adu, double bias, double exposure_ms,
                        const GridGeometry& geometry);

double grey_from_photons(const CameraModel& camera, double photons);
double photons_from_grey(const CameraModel& camera, double grey);

enum class StackKind { GreyValues, PhotonCounts, MeanIntensity };

const char* to_string(StackKind kind);
StackKind stack_kind_from_string(const std::string& s);

struct ImageStack {
  GridGeometry geometry;
  std::vector<double> values;
  StackKind kind = StackKind::PhotonCounts;

  ImageStack() = default;
  ImageStack(GridGeometry g, std::vector<double> v, StackKind k);

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t j) const { return values[j]; }
};

/// Raw photon counts from a grey-value stack (pass-through for count stacks).
ImageStack to_photon_counts(const ImageStack& stack, const CameraModel& camera);
ImageStack to_grey_values(const ImageStack& photons, const CameraModel& camera);

struct PointSource {
  Vec3 position;
  double intensity = 0.0;
};

/// Background rate: median of raw photon counts divided by c.
double estimate_background(const ImageStack& stack, const CameraModel& camera);

/// Median with the lower-midpoint average convention for even lengths.
double median(std::span<const double> values);

}  // namespace psfmix
