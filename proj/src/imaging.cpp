#include "psfmix/imaging.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "psfmix/errors.hpp"

namespace psfmix {

GridGeometry::GridGeometry(std::size_t n_slices, std::size_t n_rows, std::size_t n_cols,
                           double lateral_sampling_nm, double axial_sampling_nm, Vec3 origin_um)
    : n_slices_(n_slices),
      n_rows_(n_rows),
      n_cols_(n_cols),
      dxy_nm_(lateral_sampling_nm),
      dz_nm_(axial_sampling_nm),
      origin_(origin_um) {
  if (n_slices == 0 || n_rows == 0 || n_cols == 0)
    throw ValidationError("grid geometry: all counts must be >= 1");
  if (!(lateral_sampling_nm > 0.0) || !(axial_sampling_nm > 0.0))
    throw ValidationError("grid geometry: samplings must be > 0");
  if (!std::isfinite(origin_um.x) || !std::isfinite(origin_um.y) || !std::isfinite(origin_um.z))
    throw ValidationError("grid geometry: origin must be finite");
}

PixelIndex GridGeometry::decode(std::size_t j) const {
  if (j >= size()) throw std::out_of_range("pixel index out of range");
  const std::size_t plane = n_rows_ * n_cols_;
  return {j / plane, (j % plane) / n_cols_, j % n_cols_};
}

Vec3 GridGeometry::max_corner() const {
  return {x_at(n_cols_ - 1), y_at(n_rows_ - 1), z_at(n_slices_ - 1)};
}

Vec3 pixel_center(const GridGeometry& geometry, std::size_t j) {
  const PixelIndex p = geometry.decode(j);
  return {geometry.x_at(p.col), geometry.y_at(p.row), geometry.z_at(p.slice)};
}

void CameraModel::validate() const {
  if (!(quantum_efficiency > 0.0 && quantum_efficiency <= 1.0))
    throw ValidationError("camera: quantum efficiency must be in (0, 1]");
  if (!(gain > 0.0)) throw ValidationError("camera: gain must be > 0");
  if (!(adu_factor > 0.0)) throw ValidationError("camera: ADU factor must be > 0");
  if (!(bias >= 0.0)) throw ValidationError("camera: bias must be >= 0");
  if (!(exposure_ms > 0.0)) throw ValidationError("camera: exposure must be > 0");
  if (!(pixel_area_um2 > 0.0)) throw ValidationError("camera: pixel area must be > 0");
}

CameraModel make_camera(double q, double m, double adu, double bias, double exposure_ms,
                        const GridGeometry& geometry) {
  CameraModel cam{q, m, adu, bias, exposure_ms, geometry.dxy_um() * geometry.dxy_um()};
  cam.validate();
  return cam;
}

double grey_from_photons(const CameraModel& camera, double photons) {
  const double g = std::round(camera.slope() * photons + camera.bias);
  return std::max(0.0, g);
}

double photons_from_grey(const CameraModel& camera, double grey) {
  return std::max(0.0, (grey - camera.bias) / camera.slope());
}

const char* to_string(StackKind kind) {
  switch (kind) {
    case StackKind::GreyValues: return "grey_values";
    case StackKind::PhotonCounts: return "photon_counts";
    case StackKind::MeanIntensity: return "mean_intensity";
  }
  return "unknown";
}

StackKind stack_kind_from_string(const std::string& s) {
  if (s == "grey_values") return StackKind::GreyValues;
  if (s == "photon_counts") return StackKind::PhotonCounts;
  if (s == "mean_intensity") return StackKind::MeanIntensity;
  throw ValidationError("unknown stack kind '" + s + "'");
}

ImageStack::ImageStack(GridGeometry g, std::vector<double> v, StackKind k)
    : geometry(g), values(std::move(v)), kind(k) {
  if (values.size() != geometry.size())
    throw ValidationError("image stack: value count " + std::to_string(values.size()) +
                          " does not match geometry size " + std::to_string(geometry.size()));
}

ImageStack to_photon_counts(const ImageStack& stack, const CameraModel& camera) {
  if (stack.kind != StackKind::GreyValues) return stack;
  std::vector<double> p(stack.size());
  std::transform(stack.values.begin(), stack.values.end(), p.begin(),
                 [&](double g) { return photons_from_grey(camera, g); });
  return ImageStack(stack.geometry, std::move(p), StackKind::PhotonCounts);
}

ImageStack to_grey_values(const ImageStack& photons, const CameraModel& camera) {
  std::vector<double> g(photons.size());
  std::transform(photons.values.begin(), photons.values.end(), g.begin(),
                 [&](double p) { return grey_from_photons(camera, p); });
  return ImageStack(photons.geometry, std::move(g), StackKind::GreyValues);
}

double median(std::span<const double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t n = v.size();
  const std::size_t hi = n / 2;
  std::nth_element(v.begin(), v.begin() + hi, v.end());
  if (n % 2 == 1) return v[hi];
  const double upper = v[hi];
  const double lower = *std::max_element(v.begin(), v.begin() + hi);
  return 0.5 * (lower + upper);
}

double estimate_background(const ImageStack& stack, const CameraModel& camera) {
  if (stack.kind != StackKind::PhotonCounts)
    throw ValidationError("background estimation expects raw photon counts");
  if (stack.values.empty()) throw ValidationError("background estimation on an empty stack");
  return median(stack.values) / camera.integration_volume();
}

}  // namespace psfmix
