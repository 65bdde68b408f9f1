#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "psfmix/imaging.hpp"
#include "psfmix/psf.hpp"

namespace psfmix {

enum class Placement { Digital, Analog };

/// One Gaussian scale together with the positions it is placed at.
struct DictionaryKernel {
  SingleGaussianParams params;
  std::vector<Vec3> positions;             // um
  std::vector<std::size_t> pixel_indices;  // digital placement: pixel of each atom
  std::size_t size() const { return positions.size(); }
};

struct Dictionary {
  Placement placement = Placement::Analog;
  std::optional<GridGeometry> geometry;  // set for digital placement
  std::vector<DictionaryKernel> kernels;

  std::size_t size() const;
  /// Offset of kernel k's block in the stacked weight vector.
  std::size_t offset(std::size_t k) const;
  bool is_digital() const { return placement == Placement::Digital && geometry.has_value(); }
  void validate() const;
};

inline constexpr std::size_t kMaxDictionaryAtoms = 100'000'000;

/// Every scale placed at every pixel centre, in vectorization order.
Dictionary build_digital_dictionary(const GridGeometry& geometry,
                                    std::span<const SingleGaussianParams> scales);

struct AtomRef {
  std::size_t kernel = 0;
  std::size_t atom = 0;
  friend bool operator==(const AtomRef&, const AtomRef&) = default;
};

/// Sub-dictionary holding only the listed atoms (kept in the given order
/// within each kernel). Placement and geometry are preserved.
Dictionary restrict_dictionary(const Dictionary& dictionary, std::span<const AtomRef> atoms);

/// Weights over a dictionary, expressed relative to a reference centre: atom m
/// of kernel k sits at offset x_km - centre from the point source.
struct GaussianMixtureModel {
  Dictionary dictionary;
  std::vector<double> weights;
  Vec3 centre;

  void validate() const;
  std::vector<AtomRef> support() const;
  /// Flat indices of the nonzero weights.
  std::vector<std::size_t> support_indices() const;
};

/// Builds a model whose weights are w / ||w||_1.
GaussianMixtureModel make_mixture(Dictionary dictionary, std::span<const double> weights,
                                  Vec3 centre);

/// Mixture density at offset x from the point source; sums the support only.
double eval_gm(const GaussianMixtureModel& model, Vec3 x);

// Dictionary spec: JSON list of {sigma_xy_nm, sigma_z_nm, placement}.
std::vector<SingleGaussianParams> read_dictionary_spec(const std::filesystem::path& path);
void write_dictionary_spec(const std::filesystem::path& path,
                           std::span<const SingleGaussianParams> scales);

// GM model file: JSON header plus a float64 payload with all |D| weights.
void write_mixture(const std::filesystem::path& header, const GaussianMixtureModel& model);
GaussianMixtureModel read_mixture(const std::filesystem::path& header);

}  // namespace psfmix
