#pragma once

#include <cstdint>
#include <span>
#include <variant>

#include "psfmix/dictionary.hpp"
#include "psfmix/imaging.hpp"
#include "psfmix/psf.hpp"

namespace psfmix {

using PsfModel = std::variant<BornWolfPsf, SingleGaussianParams, GaussianMixtureModel>;

const char* psf_type_name(const PsfModel& psf);

/// Point source, PSF and background. Intensity and background are integrated
/// quantities (photons per pixel), i.e. already multiplied by c.
struct Scene {
  PointSource source;
  double background = 0.0;
  PsfModel psf = SingleGaussianParams{100.0, 100.0};

  void validate() const;
};

struct NoiseSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

/// mu_j = alpha psi(x_j - x0) + beta at every pixel centre.
ImageStack mean_stack(const Scene& scene, const GridGeometry& geometry);
/// Pixels with mu_j = 0; the deviance of any positive count there is undefined.
std::size_t empty_signal_pixels(const ImageStack& mean);

/// PSF alone, scaled by `scale`, centred at x0 (no background).
void psf_on_grid(const PsfModel& psf, const GridGeometry& geometry, Vec3 x0, double scale,
                 std::span<double> out);

/// Independent Poisson draw per pixel.
ImageStack sample_photons(const ImageStack& mean, NoiseSeed seed);

/// Exposure time giving the requested peak SNR:
/// t_E = (beta + mean psi) / (a max(psi)^2) * 10^(psnr / 10).
double exposure_for_psnr(std::span<const double> psi, double background_rate, double pixel_area_um2,
                         double psnr_db);
double exposure_for_psnr(const BornWolfPsf& psf, Vec3 x0, double background_rate,
                         const GridGeometry& geometry, double pixel_area_um2, double psnr_db);

struct Simulation {
  ImageStack mean;
  ImageStack photons;
  ImageStack grey;
};

Simulation simulate_all(const Scene& scene, const GridGeometry& geometry, const CameraModel& camera,
                        NoiseSeed seed);
ImageStack simulate(const Scene& scene, const GridGeometry& geometry, const CameraModel& camera,
                    NoiseSeed seed);

}  // namespace psfmix
