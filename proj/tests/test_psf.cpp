#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "psfmix/errors.hpp"
#include "psfmix/psf.hpp"

using namespace psfmix;

namespace {
const BornWolfParams kParams{474.0, 1.45, 1.518};
}

TEST_CASE("Born-Wolf focal value and radial symmetry") {
  CHECK(bw_intensity_unnormalized(kParams, 0.0, 0.0) == doctest::Approx(0.25).epsilon(1e-13));
  const GridGeometry g(21, 21, 21, 65.0, 200.0);
  const auto psf = make_born_wolf(kParams, g);
  CHECK(eval_bw(psf, {0, 0, 0}) == doctest::Approx(psf.normalization / 4.0).epsilon(1e-13));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const double a = u(rng), b = u(rng), z = 2.0 * u(rng);
    const double v1 = eval_bw(psf, {a, b, z});
    const double v2 = eval_bw(psf, {std::hypot(a, b), 0.0, z});
    CHECK(std::abs(v1 - v2) <= 1e-12 * std::max(v1, 1e-300));
    CHECK(eval_bw(psf, {a, b, -z}) == doctest::Approx(v1).epsilon(1e-12));
  }
  CHECK_THROWS_AS(eval_bw(psf, {NAN, 0, 0}), ValidationError);
  CHECK_THROWS_AS(BornWolfParams({0.0, 1.0, 1.0}).validate(), ValidationError);
  CHECK_FALSE(BornWolfParams({500.0, 1.6, 1.5}).physically_valid());
}

TEST_CASE("Born-Wolf quadrature against a 2048-panel oracle") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ur(0.0, 1.5), uz(-2.0, 2.0);
  for (int i = 0; i < 20; ++i) {
    const double r = ur(rng), z = uz(rng);
    const double ref = bw_intensity_fixed(kParams, r, z, 2048);
    const double v = bw_intensity_unnormalized(kParams, r, z);
    CHECK(std::abs(v - ref) <= 1e-8 * ref + 1e-16);
  }
}

TEST_CASE("Born-Wolf lateral Parseval integral") {
  // int |int_0^1 J0(a r rho) e^{-i b rho^2} rho d rho|^2 2 pi r dr = pi / a^2 per plane.
  const double a = kParams.bessel_scale();
  for (double z : {0.0, 0.5}) {
    const double dr = 1.0 / 512.0;
    double s = 0.0;
    for (double r = 0.5 * dr; r < 40.0; r += dr)
      s += bw_intensity_fixed(kParams, r, z, 256) * 2.0 * std::numbers::pi * r * dr;
    CHECK(s == doctest::Approx(std::numbers::pi / (a * a)).epsilon(2e-3));
  }
}

TEST_CASE("Born-Wolf grid evaluation and table") {
  const GridGeometry g(9, 11, 11, 65.0, 200.0, {-0.3, -0.3, -0.8});
  const auto psf = make_born_wolf(kParams, g);
  CHECK(psf.normalization > 0.0);
  const Vec3 x0{0.013, -0.021, 0.05};
  std::vector<double> grid(g.size());
  bw_on_grid(psf, g, x0, 2.0, grid);
  for (std::size_t j : {0u, 60u, 500u, 1088u}) {
    const double ref = 2.0 * eval_bw(psf, pixel_center(g, j) - x0);
    CHECK(grid[j] == doctest::Approx(ref).epsilon(1e-7));
  }
  const BornWolfTable table(psf, 1.0, -1.5, 1.5);
  std::vector<double> tab(g.size());
  table.on_grid(g, x0, 2.0, tab);
  double peak = *std::max_element(grid.begin(), grid.end());
  for (std::size_t j = 0; j < g.size(); ++j) CHECK(std::abs(tab[j] - grid[j]) < 1e-4 * peak);
}

TEST_CASE("Born-Wolf box normalization integrates to one") {
  const GridGeometry g(9, 5, 5, 130.0, 250.0);
  const auto psf = make_born_wolf(kParams, g);
  // Midpoint sum on the same box, evaluated directly.
  const long half = static_cast<long>(std::floor(3.0 / 0.13 + 1e-9));
  double s = 0.0;
  for (int sl = 0; sl < 9; ++sl) {
    const double z = (sl - 4) * 0.25;
    for (long i = -half; i <= half; i += 1)
      for (long j = -half; j <= half; j += 1)
        s += bw_intensity_fixed(kParams, std::hypot(i * 0.13, j * 0.13), z, kBornWolfPanels);
  }
  CHECK(s * 0.13 * 0.13 * 0.25 * psf.normalization == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("single Gaussian values") {
  const SingleGaussianParams p{100.0, 100.0};
  CHECK(eval_sg(p, {0, 0, 0}) == doctest::Approx(63.4936).epsilon(1e-5));
  CHECK(eval_sg(p, {0.1, 0, 0}) == doctest::Approx(63.4936 * std::exp(-0.5)).epsilon(1e-5));
  CHECK(p.normalization() ==
        doctest::Approx(1.0 / std::sqrt(8.0 * std::pow(std::numbers::pi, 3) * 1e-6)).epsilon(1e-14));
  // Unit mass on a +-6 sigma box.
  const SingleGaussianParams q{80.0, 250.0};
  const double h = 0.01, hz = 0.025;
  double s = 0.0;
  for (double x = -0.48 + h / 2; x < 0.48; x += h)
    for (double y = -0.48 + h / 2; y < 0.48; y += h)
      for (double z = -1.5 + hz / 2; z < 1.5; z += hz) s += eval_sg(q, {x, y, z});
  CHECK(s * h * h * hz == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("single Gaussian positivity and maximum") {
  const SingleGaussianParams p{120.0, 300.0};
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double top = eval_sg(p, {0, 0, 0});
  for (int i = 0; i < 100; ++i) {
    const double v = eval_sg(p, {u(rng), u(rng), u(rng)});
    CHECK(v > 0.0);
    CHECK(v <= top);
  }
  const GridGeometry g(3, 4, 5, 50.0, 100.0);
  std::vector<double> out(g.size(), 99.0);
  sg_on_grid(p, g, {0.1, 0.1, 0.1}, 3.0, out);
  for (std::size_t j = 0; j < g.size(); ++j)
    CHECK(out[j] == doctest::Approx(3.0 * eval_sg(p, pixel_center(g, j) - Vec3{0.1, 0.1, 0.1}))
                        .epsilon(1e-13));
}

TEST_CASE("theoretical Gaussian widths") {
  // Published widefield values, rounded to the nm.
  const auto sbw = theoretical_sg({474.0, 1.45, 1.518});
  CHECK(std::round(sbw.sigma_xy_nm) == 74.0);
  CHECK(std::round(sbw.sigma_z_nm) == 267.0);
  const auto wffm = theoretical_sg({620.0, 1.45, 1.518});
  CHECK(std::round(wffm.sigma_xy_nm) == 96.0);
  CHECK(std::round(wffm.sigma_z_nm) == 349.0);
  // Axial over lateral width is 2 sqrt(3) n / NA.
  const BornWolfParams p{550.0, 1.2, 1.33};
  const auto t = theoretical_sg(p);
  CHECK(t.sigma_z_nm / t.sigma_xy_nm == doctest::Approx(2.0 * std::sqrt(3.0) * 1.33 / 1.2));
}
