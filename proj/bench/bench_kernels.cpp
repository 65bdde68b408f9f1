// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <random>

#include "psfmix/kernels.hpp"
#include "psfmix/psf.hpp"

using namespace psfmix;
namespace kn = psfmix::kernels;

namespace {

std::vector<double> fill(std::size_t n, double lo, double hi, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Deviance(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto p = fill(n, 0, 50, 1), m = fill(n, 1, 50, 2);
  for (auto _ : st)
    benchmark::DoNotOptimize(Parallel ? kn::parallel::deviance(p, m) : kn::serial::deviance(p, m));
  st.SetItemsProcessed(st.iterations() * static_cast<long>(n));
}

template <bool Parallel>
void BM_PoissonProx(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto c = fill(n, -10, 50, 3), p = fill(n, 0, 50, 4);
  std::vector<double> out(n);
  for (auto _ : st) {
    if (Parallel)
      kn::parallel::poisson_prox(c, p, 0.5, out);
    else
      kn::serial::poisson_prox(c, p, 0.5, out);
    benchmark::ClobberMemory();
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(n));
}

template <bool Parallel>
void BM_ApplyAxis(benchmark::State& st) {
  const auto side = static_cast<std::size_t>(st.range(0));
  const kn::Dims d{side, side, side};
  kn::AxisStencil sten{kn::Boundary::Reflexive, fill(2 * side - 1, 0, 1, 5)};
  for (std::size_t i = 0; i < side; ++i) sten.taps[side - 1 - i] = sten.taps[side - 1 + i];
  const auto x = fill(d.size(), 0, 1, 6);
  std::vector<double> y(d.size());
  for (auto _ : st) {
    for (int axis = 0; axis < 3; ++axis) {
      if (Parallel)
        kn::parallel::apply_axis(sten, d, axis, false, x, y);
      else
        kn::serial::apply_axis(sten, d, axis, false, x, y);
    }
    benchmark::ClobberMemory();
  }
}

template <bool Parallel>
void BM_Gaussians(benchmark::State& st) {
  const GridGeometry g(21, 21, 21, 65.0, 200.0);
  const auto n_atoms = static_cast<std::size_t>(st.range(0));
  const auto u = fill(3 * n_atoms, 0, 1.3, 7);
  std::vector<kn::GaussianAtom> atoms;
  for (std::size_t a = 0; a < n_atoms; ++a)
    atoms.push_back({{u[3 * a], u[3 * a + 1], 3 * u[3 * a + 2]}, 1.0, 0.13, 0.42});
  std::vector<double> out(g.size());
  for (auto _ : st) {
    std::fill(out.begin(), out.end(), 0.0);
    if (Parallel)
      kn::parallel::accumulate_gaussians(g, atoms, out);
    else
      kn::serial::accumulate_gaussians(g, atoms, out);
    benchmark::ClobberMemory();
  }
}

template <bool Parallel>
void BM_BornWolf(benchmark::State& st) {
  const auto nr = static_cast<std::size_t>(st.range(0));
  const auto q = RadialQuadrature::simpson(kBornWolfPanels);
  const auto radii = fill(nr, 0, 1.5, 8), axial = fill(21, -2, 2, 9);
  std::vector<double> out(nr * axial.size());
  for (auto _ : st) {
    if (Parallel)
      kn::parallel::bw_intensity(radii, axial, 19.0, 6.0, q.nodes, q.weights, out);
    else
      kn::serial::bw_intensity(radii, axial, 19.0, 6.0, q.nodes, q.weights, out);
    benchmark::ClobberMemory();
  }
}

}  // namespace

BENCHMARK(BM_Deviance<false>)->Arg(9261)->Arg(1 << 20);
BENCHMARK(BM_Deviance<true>)->Arg(9261)->Arg(1 << 20);
BENCHMARK(BM_PoissonProx<false>)->Arg(9261)->Arg(1 << 20);
BENCHMARK(BM_PoissonProx<true>)->Arg(9261)->Arg(1 << 20);
BENCHMARK(BM_ApplyAxis<false>)->Arg(21)->Arg(64);
BENCHMARK(BM_ApplyAxis<true>)->Arg(21)->Arg(64);
BENCHMARK(BM_Gaussians<false>)->Arg(16)->Arg(512);
BENCHMARK(BM_Gaussians<true>)->Arg(16)->Arg(512);
BENCHMARK(BM_BornWolf<false>)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BornWolf<true>)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
