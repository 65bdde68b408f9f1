#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "psfmix/errors.hpp"
#include "psfmix/forward.hpp"

using namespace psfmix;

namespace {

const BornWolfParams kObjective{474.0, 1.45, 1.518};

double sample_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double empirical_psnr(const ImageStack& counts, const ImageStack& mean, double background) {
  double peak = 0.0, err = 0.0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    peak = std::max(peak, mean.values[j] - background);
    err += (counts.values[j] - mean.values[j]) * (counts.values[j] - mean.values[j]);
  }
  return 10.0 * std::log10(peak * peak / (err / static_cast<double>(counts.size())));
}

}  // namespace

TEST_CASE("mean stack basics") {
  const GridGeometry g(3, 9, 9, 65.0, 200.0);
  Scene s{{{0.26, 0.26, 0.2}, 0.0}, 7.5, SingleGaussianParams{120.0, 300.0}};
  const auto mu = mean_stack(s, g);
  CHECK(mu.kind == StackKind::MeanIntensity);
  for (double v : mu.values) CHECK(v == 7.5);

  s.background = 0.0;
  s.source.intensity = 100.0;
  s.psf = SingleGaussianParams{10.0, 30.0};
  s.source.position = {0.0, 0.0, 0.0};
  CHECK(empty_signal_pixels(mean_stack(s, g)) > 0);
  s.background = 1e-3;
  CHECK(empty_signal_pixels(mean_stack(s, g)) == 0);
  s.source.intensity = -1.0;
  CHECK_THROWS_AS(mean_stack(s, g), ValidationError);
}

TEST_CASE("degenerate mixture reproduces the single Gaussian bit for bit") {
  const GridGeometry g(5, 11, 11, 65.0, 200.0);
  const SingleGaussianParams sg{110.0, 350.0};
  Dictionary d;
  d.placement = Placement::Analog;
  d.kernels.push_back({sg, {{0.0, 0.0, 0.0}}, {}});
  const auto gm = make_mixture(d, std::vector<double>{1.0}, {0, 0, 0});
  for (const Vec3 x0 : {Vec3{0.33, 0.31, 0.41}, Vec3{0.325, 0.39, 0.4}}) {
    const Scene a{{x0, 850.0}, 3.0, sg};
    const Scene b{{x0, 850.0}, 3.0, gm};
    CHECK(mean_stack(a, g).values == mean_stack(b, g).values);
  }
}

TEST_CASE("one-dimensional Born-Wolf stack has a central mode and side lobes") {
  const GridGeometry g(1, 1, 101, 50.0, 50.0);
  const auto bw = make_born_wolf(kObjective, g);
  const Scene s{{{2.5, 0.0, 1.5}, 1000.0}, 1.0, bw};
  const auto mu = mean_stack(s, g);
  const auto peak = std::max_element(mu.values.begin(), mu.values.end());
  const auto j = static_cast<long>(peak - mu.values.begin());
  CHECK(std::abs(j - 50) <= 2);
  // A secondary local maximum above background away from the centre.
  bool lobe = false;
  for (std::size_t i = 55; i < 100; ++i)
    if (mu.values[i] > mu.values[i - 1] && mu.values[i] > mu.values[i + 1] && mu.values[i] > 1.0 + 1e-3 * (*peak - 1.0))
      lobe = true;
  CHECK(lobe);
}

TEST_CASE("linearity and shift covariance") {
  const GridGeometry g(7, 15, 15, 65.0, 200.0);
  const auto bw = make_born_wolf(kObjective, g);
  const std::vector<PsfModel> models{bw, SingleGaussianParams{90.0, 300.0}};
  for (const auto& psf : models) {
    const Vec3 x0{0.455, 0.455, 0.6};
    const auto m1 = mean_stack({{x0, 300.0}, 2.0, psf}, g);
    const auto m2 = mean_stack({{x0, 700.0}, 2.0, psf}, g);
    const auto m12 = mean_stack({{x0, 1000.0}, 2.0, psf}, g);
    for (std::size_t j = 0; j < g.size(); ++j)
      CHECK(m12.values[j] == doctest::Approx(m1.values[j] + m2.values[j] - 2.0).epsilon(1e-13));

    const auto shifted = mean_stack({{x0 + Vec3{0.065, 0.0, 0.0}, 1000.0}, 2.0, psf}, g);
    double worst = 0.0, peak = 0.0;
    for (std::size_t s = 0; s < 7; ++s)
      for (std::size_t r = 0; r < 15; ++r)
        for (std::size_t c = 1; c < 15; ++c) {
          worst = std::max(worst, std::abs(shifted.values[g.index(s, r, c)] - m12.values[g.index(s, r, c - 1)]));
          peak = std::max(peak, m12.values[g.index(s, r, c)]);
        }
    CHECK(worst <= 1e-10 * peak);
  }
}

TEST_CASE("mixture mean equals a sum of virtual sources") {
  const GridGeometry g(6, 12, 12, 65.0, 200.0, {0.1, -0.2, 0.3});
  const std::vector<SingleGaussianParams> scales{{131.0, 421.0}, {87.3, 280.7}};
  const auto d = build_digital_dictionary(g, scales);
  std::vector<double> w(d.size(), 0.0);
  w[g.index(2, 5, 5)] = 0.5;
  w[g.index(3, 6, 6)] = 0.2;
  w[g.size() + g.index(3, 5, 7)] = 0.3;
  const Vec3 centre = pixel_center(g, g.index(3, 6, 6));
  const auto gm = make_mixture(d, w, centre);
  const Vec3 x0{0.52, 0.21, 1.05};
  const double alpha = 2500.0, beta = 4.0;
  const auto mu = mean_stack({{x0, alpha}, beta, gm}, g);
  std::vector<double> ref(g.size(), beta);
  std::size_t flat = 0;
  for (const auto& k : gm.dictionary.kernels)
    for (const auto& p : k.positions) {
      const double wk = gm.weights[flat++];
      if (wk == 0.0) continue;
      const auto part = mean_stack({{x0 + (p - centre), alpha * wk}, 0.0, k.params}, g);
      for (std::size_t j = 0; j < g.size(); ++j) ref[j] += part.values[j];
    }
  for (std::size_t j = 0; j < g.size(); ++j) CHECK(mu.values[j] == doctest::Approx(ref[j]).epsilon(1e-12));
}

TEST_CASE("Poisson sampling") {
  const GridGeometry g(1, 1, 100000, 10.0, 10.0);
  const ImageStack mean(g, std::vector<double>(g.size(), 10.0), StackKind::MeanIntensity);
  const auto p = sample_photons(mean, {42, 0});
  const double m = sample_mean(p.values);
  double var = 0.0;
  for (double v : p.values) var += (v - m) * (v - m);
  var /= static_cast<double>(p.size() - 1);
  CHECK(std::abs(m - 10.0) < 0.1);
  CHECK(std::abs(var - 10.0) < 0.3);
  CHECK(sample_photons(mean, {42, 0}).values == p.values);
  CHECK(sample_photons(mean, {42, 1}).values != p.values);

  const ImageStack zero(GridGeometry(1, 1, 50, 10, 10), std::vector<double>(50, 0.0), StackKind::MeanIntensity);
  for (double v : sample_photons(zero, {1, 2}).values) CHECK(v == 0.0);
  const ImageStack neg(GridGeometry(1, 1, 1, 10, 10), {-1.0}, StackKind::MeanIntensity);
  CHECK_THROWS_AS(sample_photons(neg, {1, 2}), ValidationError);
}

TEST_CASE("exposure for a peak SNR") {
  const std::vector<double> psi{0.2, 1.3, 0.7, 0.05};
  const double t10 = exposure_for_psnr(psi, 3.0, 0.004225, 10.0);
  CHECK(exposure_for_psnr(psi, 3.0, 0.004225, 20.0) / t10 == doctest::Approx(10.0).epsilon(1e-14));
  const std::vector<double> flat(9, 0.8);
  CHECK(exposure_for_psnr(flat, 0.0, 0.5, 13.0) == doctest::Approx(std::pow(10.0, 1.3) / (0.5 * 0.8)));
  const std::vector<double> dark(3, 0.0);
  CHECK_THROWS_AS(exposure_for_psnr(dark, 1.0, 1.0, 10.0), NumericalError);
}

TEST_CASE("higher PSNR gives cleaner stacks") {
  const GridGeometry g(21, 21, 21, 65.0, 200.0);
  const auto bw = make_born_wolf(kObjective, g);
  const Vec3 x0{0.66, 0.645, 2.03};
  const double rate = 112.7, a = g.dxy_um() * g.dxy_um();
  std::vector<ImageStack> means;
  std::vector<double> betas;
  for (double psnr : {10.0, 20.0}) {
    const double c = a * exposure_for_psnr(bw, x0, rate, g, a, psnr);
    betas.push_back(c * rate);
    means.push_back(mean_stack({{x0, c}, c * rate, bw}, g));
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double lo = empirical_psnr(sample_photons(means[0], {seed, 0}), means[0], betas[0]);
    const double hi = empirical_psnr(sample_photons(means[1], {seed, 1}), means[1], betas[1]);
    CHECK(hi > lo);
  }
}

TEST_CASE("simulate through the camera") {
  const GridGeometry line(1, 1, 101, 50.0, 50.0);
  const auto bw = make_born_wolf(kObjective, line);
  const Scene s{{{2.5, 0.0, 1.5}, 500.0}, 2.0, bw};
  const auto identity = make_camera(1, 1, 1, 0, 1, line);
  const auto sim = simulate_all(s, line, identity, {5, 0});
  CHECK(sim.grey.values == sim.photons.values);
  CHECK(sim.grey.kind == StackKind::GreyValues);

  const CameraModel sbw = make_camera(0.81, 1, 2.0, 100, 21, GridGeometry(21, 21, 21, 65, 200));
  const auto dark = simulate({{{0, 0, 0}, 0.0}, 0.0, SingleGaussianParams{100, 300}},
                             GridGeometry(2, 3, 3, 65, 200), sbw, {1, 1});
  for (double v : dark.values) CHECK(v == 100.0);

  // Grey values carry the counts when the slope divides out.
  const GridGeometry g(21, 21, 21, 65.0, 200.0);
  const auto bwg = make_born_wolf(kObjective, g);
  const Scene sc{{{0.66, 0.645, 2.03}, 2000.0}, 10.0, bwg};
  const auto mu = mean_stack(sc, g);
  CameraModel cam = sbw;
  cam.adu_factor = 0.81;
  std::vector<double> acc(g.size(), 0.0);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto grey = simulate(sc, g, cam, {seed, 3});
    const auto back = to_photon_counts(grey, cam);
    for (std::size_t j = 0; j < g.size(); ++j) acc[j] += back.values[j] / 50.0;
  }
  const double total = std::accumulate(acc.begin(), acc.end(), 0.0);
  const double expect = std::accumulate(mu.values.begin(), mu.values.end(), 0.0);
  CHECK(std::abs(total / expect - 1.0) < 0.05);
  const auto brightest = std::max_element(mu.values.begin(), mu.values.end()) - mu.values.begin();
  CHECK(std::abs(acc[brightest] / mu.values[brightest] - 1.0) < 0.05);
}

TEST_CASE("background estimate on a desk-scale SBW stack") {
  const GridGeometry g(21, 21, 21, 65.0, 200.0);
  const auto cam = make_camera(0.81, 1.0, 2.0, 100.0, 21.0, g);
  const double c = cam.integration_volume();
  const double rate = 10.0 / c;
  const Scene scene{{g.centre(), 10.0}, 10.0, make_born_wolf({474.0, 1.45, 1.518}, g)};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto grey = simulate(scene, g, cam, {seed, 0});
    const double est = estimate_background(to_photon_counts(grey, cam), cam);
    CHECK(std::abs(est - rate) < 0.15 * rate);
  }
}
