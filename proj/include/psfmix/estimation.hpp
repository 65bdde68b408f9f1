#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "psfmix/blur.hpp"
#include "psfmix/cmaes.hpp"
#include "psfmix/dictionary.hpp"
#include "psfmix/forward.hpp"
#include "psfmix/lbfgsb.hpp"

namespace psfmix {

struct DebiasResult {
  std::vector<double> weights;             // over the effective dictionary
  double ps_intensity = 0.0;               // ||weights||_1
  std::vector<double> normalized_weights;  // empty when the intensity is zero
  double deviance_start = 0.0;
  double deviance_final = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool degenerate = false;  // all weights vanished
  std::vector<double> trace;
};

/// ML refit of nonnegative weights on the effective dictionary, blurred with
/// `mode` (use the mode of the calibration solve for like-for-like deviances).
DebiasResult debias(std::span<const double> counts, const Dictionary& effective,
                    const GridGeometry& image, double background, std::span<const double> start,
                    BlurMode mode, const LbfgsbConfig& config = {});
/// Same, for an explicit operator.
DebiasResult debias(std::span<const double> counts, const MixtureOperator& op, double background,
                    std::span<const double> start, const LbfgsbConfig& config = {});

/// argmin_{alpha >= 0} nu(p, alpha psi + beta); the deviance is returned
/// through `deviance_out` when given.
double profile_intensity(std::span<const double> counts, std::span<const double> shape,
                         double background, double* deviance_out = nullptr);

struct SgFit {
  Vec3 position;
  double intensity = 0.0;
  SingleGaussianParams params;
  double deviance = 0.0;
  std::size_t evaluations = 0;
};

struct BwFitBounds {
  double wavelength_nm[2] = {350.0, 750.0};
  double numerical_aperture[2] = {0.6, 1.6};
  double refractive_index[2] = {1.0, 1.6};
};

struct BwFit {
  Vec3 position;
  double intensity = 0.0;  // alpha after the C_BW scaling
  BornWolfParams params;
  double deviance = 0.0;
  std::size_t evaluations = 0;
};

/// Blind fits over (x0, psf parameters); the intensity is profiled out
/// exactly at every evaluation. Axes with a single pixel keep the source on
/// the sampled plane and drop the corresponding width.
SgFit fit_blind_sg(std::span<const double> counts, const GridGeometry& geometry, double background,
                   const CmaEsConfig& config);
BwFit fit_blind_bw(std::span<const double> counts, const GridGeometry& geometry, double background,
                   const CmaEsConfig& config, const BwFitBounds& bounds = {});

/// Fixed PSF prepared for repeated localization on one grid: divided by its
/// central-mode value, with a fast evaluation path per model type.
class LocalizationModel {
 public:
  LocalizationModel(PsfModel psf, const GridGeometry& geometry);

  /// psi(x_j - x0) / psi_peak at every pixel.
  void shape(Vec3 x0, std::span<double> out) const;
  double central_mode() const { return peak_; }
  std::size_t support_size() const;
  const PsfModel& psf() const { return psf_; }

 private:
  PsfModel psf_;
  GridGeometry geometry_;
  double peak_ = 1.0;
  std::optional<BornWolfTable> table_;
  // Support of a mixture, as an effective dictionary with its weights.
  Dictionary effective_;
  std::vector<double> support_weights_;
};

/// Central mode of a mixture: the maximum over the pixel centres of its
/// dictionary lattice with the atoms at their calibration positions. Analog
/// mixtures have no lattice and use a pattern search started at the heaviest
/// atoms instead.
double mixture_peak(const GaussianMixtureModel& model);

struct LocalizationFit {
  Vec3 position;
  double intensity = 0.0;  // in central-mode units
  double deviance = 0.0;
  std::size_t evaluations = 0;
};

LocalizationFit localize_ps(std::span<const double> counts, const LocalizationModel& model,
                            const GridGeometry& geometry, double background,
                            const CmaEsConfig& config);

/// Position box of the imaging volume (pixel-centre extent per axis).
struct PositionBox {
  Vec3 lower, upper;
};
PositionBox position_box(const GridGeometry& geometry);

}  // namespace psfmix
