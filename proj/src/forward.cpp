#include "psfmix/forward.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "psfmix/blur.hpp"
#include "psfmix/errors.hpp"

namespace psfmix {

const char* psf_type_name(const PsfModel& psf) {
  switch (psf.index()) {
    case 0: return "bw";
    case 1: return "sg";
    default: return "gm";
  }
}

void Scene::validate() const {
  if (!(source.intensity >= 0.0) || !std::isfinite(source.intensity))
    throw ValidationError("scene: source intensity must be finite and >= 0");
  if (!(background >= 0.0) || !std::isfinite(background))
    throw ValidationError("scene: background must be finite and >= 0");
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, BornWolfPsf>)
          p.params.validate();
        else
          p.validate();
      },
      psf);
}

void psf_on_grid(const PsfModel& psf, const GridGeometry& g, Vec3 x0, double scale,
                 std::span<double> out) {
  if (out.size() != g.size()) throw ValidationError("psf_on_grid: output size mismatch");
  if (const auto* bw = std::get_if<BornWolfPsf>(&psf)) {
    bw_on_grid(*bw, g, x0, scale, out);
  } else if (const auto* sg = std::get_if<SingleGaussianParams>(&psf)) {
    sg_on_grid(*sg, g, x0, scale, out);
  } else {
    const auto& gm = std::get<GaussianMixtureModel>(psf);
    const auto support = gm.support();
    const Dictionary eff = restrict_dictionary(gm.dictionary, support);
    std::vector<double> w;
    w.reserve(support.size());
    for (const auto& a : support) w.push_back(scale * gm.weights[gm.dictionary.offset(a.kernel) + a.atom]);
    // Atom m of kernel k sits at x0 + (x_km - centre).
    const MixtureOperator op(eff, g, x0 - gm.centre, BlurMode::Exact);
    op.apply(w, out);
  }
}

ImageStack mean_stack(const Scene& scene, const GridGeometry& geometry) {
  scene.validate();
  std::vector<double> mu(geometry.size());
  psf_on_grid(scene.psf, geometry, scene.source.position, scene.source.intensity, mu);
  for (double& v : mu) v += scene.background;
  return ImageStack(geometry, std::move(mu), StackKind::MeanIntensity);
}

std::size_t empty_signal_pixels(const ImageStack& mean) {
  return static_cast<std::size_t>(
      std::count_if(mean.values.begin(), mean.values.end(), [](double v) { return v <= 0.0; }));
}

ImageStack sample_photons(const ImageStack& mean, NoiseSeed seed) {
  if (mean.kind != StackKind::MeanIntensity)
    throw ValidationError("sample_photons expects a mean-intensity stack");
  std::seed_seq seq{static_cast<std::uint32_t>(seed.seed), static_cast<std::uint32_t>(seed.seed >> 32),
                    static_cast<std::uint32_t>(seed.stream),
                    static_cast<std::uint32_t>(seed.stream >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<double> counts(mean.size());
  for (std::size_t j = 0; j < mean.size(); ++j) {
    const double mu = mean.values[j];
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw ValidationError("sample_photons: negative mean");
    if (mu == 0.0) {
      counts[j] = 0.0;
      continue;
    }
    std::poisson_distribution<long long> draw(mu);
    counts[j] = static_cast<double>(draw(rng));
  }
  return ImageStack(mean.geometry, std::move(counts), StackKind::PhotonCounts);
}

double exposure_for_psnr(std::span<const double> psi, double background_rate, double pixel_area_um2,
                         double psnr_db) {
  if (psi.empty()) throw ValidationError("exposure_for_psnr: empty PSF sample");
  if (!(pixel_area_um2 > 0.0)) throw ValidationError("exposure_for_psnr: pixel area must be > 0");
  double sum = 0.0, peak = 0.0;
  for (double v : psi) {
    sum += v;
    peak = std::max(peak, v);
  }
  if (!(peak > 0.0)) throw NumericalError("exposure_for_psnr: PSF maximum is zero");
  const double mean = sum / static_cast<double>(psi.size());
  return (background_rate + mean) / (pixel_area_um2 * peak * peak) * std::pow(10.0, 0.1 * psnr_db);
}

double exposure_for_psnr(const BornWolfPsf& psf, Vec3 x0, double background_rate,
                         const GridGeometry& geometry, double pixel_area_um2, double psnr_db) {
  std::vector<double> psi(geometry.size());
  bw_on_grid(psf, geometry, x0, 1.0, psi);
  return exposure_for_psnr(psi, background_rate, pixel_area_um2, psnr_db);
}

Simulation simulate_all(const Scene& scene, const GridGeometry& geometry, const CameraModel& camera,
                        NoiseSeed seed) {
  camera.validate();
  Simulation sim;
  sim.mean = mean_stack(scene, geometry);
  sim.photons = sample_photons(sim.mean, seed);
  sim.grey = to_grey_values(sim.photons, camera);
  return sim;
}

ImageStack simulate(const Scene& scene, const GridGeometry& geometry, const CameraModel& camera,
                    NoiseSeed seed) {
  return simulate_all(scene, geometry, camera, seed).grey;
}

}  // namespace psfmix
