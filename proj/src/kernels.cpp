#include "psfmix/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "psfmix/errors.hpp"

namespace psfmix::kernels {

double deviance_term(double count, double mean) {
  if (count > 0.0) {
    if (!(mean > 0.0))
      throw DomainError("deviance: mean " + std::to_string(mean) + " <= 0 at a pixel with count " +
                        std::to_string(count));
    return count * std::log(count / mean) + mean - count;
  }
  return mean;
}

double poisson_prox_scalar(double c, double p, double t) {
  const double b = c - t;
  const double disc = std::sqrt(b * b + 4.0 * t * p);
  // Avoid cancellation when b is large and negative.
  if (b >= 0.0) return 0.5 * (b + disc);
  const double denom = disc - b;
  return denom > 0.0 ? 2.0 * t * p / denom : 0.0;
}

namespace {

void check_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ValidationError(std::string(what) + ": size mismatch");
}

std::size_t reflect(long k, long n) {
  // Half-sample symmetric extension; valid for -n <= k < 2n.
  if (k < 0) return static_cast<std::size_t>(-k - 1);
  if (k >= n) return static_cast<std::size_t>(2 * n - 1 - k);
  return static_cast<std::size_t>(k);
}

// 1-D operator on a gathered line.
void apply_line(const AxisStencil& st, bool adjoint, const double* in, double* out, std::size_t n) {
  if (st.boundary == Boundary::Zero) {
    // taps[d + n - 1] = s(d), d = i - m
    const double* s = st.taps.data() + (n - 1);
    if (!adjoint) {
      // Column sweep; sparse weight lines skip their zero entries.
      std::fill(out, out + n, 0.0);
      for (std::size_t m = 0; m < n; ++m) {
        const double v = in[m];
        if (v == 0.0) continue;
        const double* col = s - static_cast<long>(m);
        for (std::size_t i = 0; i < n; ++i) out[i] += col[i] * v;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t m = 0; m < n; ++m)
          acc += s[static_cast<long>(m) - static_cast<long>(i)] * in[m];
        out[i] = acc;
      }
    }
  } else {
    // Symmetric stencil, so the reflexive operator is self-adjoint.
    const long h = static_cast<long>(st.half_width());
    const long nl = static_cast<long>(n);
    const double* s = st.taps.data() + h;
    for (long i = 0; i < nl; ++i) {
      double acc = 0.0;
      for (long d = -h; d <= h; ++d) acc += s[d] * in[reflect(i + d, nl)];
      out[static_cast<std::size_t>(i)] = acc;
    }
  }
}

struct LineLayout {
  std::size_t n_lines;
  std::size_t length;
  std::size_t stride;
  // Offset of the first element of line l.
  std::size_t start(std::size_t l, const Dims& d, int axis) const {
    if (axis == 2) return l * d.nx;
    if (axis == 1) return (l / d.nx) * d.ny * d.nx + (l % d.nx);
    return l;
  }
};

LineLayout layout(const Dims& d, int axis) {
  if (axis == 2) return {d.nz * d.ny, d.nx, 1};
  if (axis == 1) return {d.nz * d.nx, d.ny, d.nx};
  return {d.ny * d.nx, d.nz, d.ny * d.nx};
}

void validate_stencil(const AxisStencil& st, std::size_t n) {
  if (st.boundary == Boundary::Zero) {
    if (st.taps.size() != 2 * n - 1) throw ValidationError("zero-boundary stencil must have 2n-1 taps");
  } else {
    if (st.taps.size() % 2 != 1) throw ValidationError("reflexive stencil must have odd length");
    if (st.half_width() > n) throw ValidationError("reflexive stencil wider than the axis");
  }
}

struct AtomFactors {
  std::vector<double> gx, gy, gz;
};

void atom_factors(const GridGeometry& g, const GaussianAtom& a, double* gx, double* gy, double* gz) {
  const double ixy = 0.5 / (a.sigma_xy * a.sigma_xy);
  const double iz = 0.5 / (a.sigma_z * a.sigma_z);
  for (std::size_t c = 0; c < g.n_cols(); ++c) {
    const double d = g.x_at(c) - a.centre.x;
    gx[c] = std::exp(-ixy * d * d);
  }
  for (std::size_t r = 0; r < g.n_rows(); ++r) {
    const double d = g.y_at(r) - a.centre.y;
    gy[r] = std::exp(-ixy * d * d);
  }
  for (std::size_t s = 0; s < g.n_slices(); ++s) {
    const double d = g.z_at(s) - a.centre.z;
    gz[s] = a.amplitude * std::exp(-iz * d * d);
  }
}

double simpson_line(double a_r, double b_z, std::span<const double> nodes,
                    std::span<const double> weights, double& im_out) {
  double re = 0.0, im = 0.0;
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    const double rho = nodes[q];
    const double radial = weights[q] * ::j0(a_r * rho);
    re += radial * std::cos(b_z * rho * rho);
    im += radial * std::sin(b_z * rho * rho);
  }
  im_out = im;
  return re;
}

}  // namespace

namespace serial {

double deviance(std::span<const double> counts, std::span<const double> mean) {
  check_same_size(counts.size(), mean.size(), "deviance");
  const std::size_t n = counts.size();
  double total = 0.0;
  for (std::size_t b0 = 0; b0 < n; b0 += kReductionBlock) {
    const std::size_t b1 = std::min(n, b0 + kReductionBlock);
    double part = 0.0;
    for (std::size_t j = b0; j < b1; ++j) part += deviance_term(counts[j], mean[j]);
    total += part;
  }
  return total;
}

void poisson_prox(std::span<const double> candidate, std::span<const double> counts,
                  double step_over_n, std::span<double> out) {
  check_same_size(candidate.size(), counts.size(), "poisson_prox");
  check_same_size(candidate.size(), out.size(), "poisson_prox");
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = poisson_prox_scalar(candidate[j], counts[j], step_over_n);
}

void apply_axis(const AxisStencil& stencil, const Dims& dims, int axis, bool adjoint,
                std::span<const double> in, std::span<double> out) {
  check_same_size(in.size(), dims.size(), "apply_axis");
  check_same_size(out.size(), dims.size(), "apply_axis");
  const LineLayout lay = layout(dims, axis);
  validate_stencil(stencil, lay.length);
  std::vector<double> a(lay.length), b(lay.length);
  for (std::size_t l = 0; l < lay.n_lines; ++l) {
    const std::size_t o = lay.start(l, dims, axis);
    for (std::size_t i = 0; i < lay.length; ++i) a[i] = in[o + i * lay.stride];
    apply_line(stencil, adjoint, a.data(), b.data(), lay.length);
    for (std::size_t i = 0; i < lay.length; ++i) out[o + i * lay.stride] = b[i];
  }
}

void accumulate_gaussians(const GridGeometry& g, std::span<const GaussianAtom> atoms,
                          std::span<double> out) {
  check_same_size(out.size(), g.size(), "accumulate_gaussians");
  std::vector<double> gx(g.n_cols()), gy(g.n_rows()), gz(g.n_slices());
  // Line-major accumulation in atom order, matching the parallel kernel.
  std::vector<AtomFactors> f(atoms.size());
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    f[a].gx.resize(g.n_cols());
    f[a].gy.resize(g.n_rows());
    f[a].gz.resize(g.n_slices());
    atom_factors(g, atoms[a], f[a].gx.data(), f[a].gy.data(), f[a].gz.data());
  }
  for (std::size_t s = 0; s < g.n_slices(); ++s)
    for (std::size_t r = 0; r < g.n_rows(); ++r) {
      double* line = out.data() + g.index(s, r, 0);
      for (std::size_t a = 0; a < atoms.size(); ++a) {
        const double coef = f[a].gz[s] * f[a].gy[r];
        if (coef == 0.0) continue;
        for (std::size_t c = 0; c < g.n_cols(); ++c) line[c] += coef * f[a].gx[c];
      }
    }
}

void bw_intensity(std::span<const double> radii, std::span<const double> axial, double bessel_scale,
                  double phase_scale, std::span<const double> nodes, std::span<const double> weights,
                  std::span<double> out) {
  check_same_size(out.size(), radii.size() * axial.size(), "bw_intensity");
  for (std::size_t iz = 0; iz < axial.size(); ++iz)
    for (std::size_t ir = 0; ir < radii.size(); ++ir) {
      double im = 0.0;
      const double re =
          simpson_line(bessel_scale * radii[ir], phase_scale * axial[iz], nodes, weights, im);
      out[iz * radii.size() + ir] = re * re + im * im;
    }
}

}  // namespace serial

namespace parallel {

double deviance(std::span<const double> counts, std::span<const double> mean) {
  check_same_size(counts.size(), mean.size(), "deviance");
  const std::size_t n = counts.size();
  const std::size_t n_blocks = (n + kReductionBlock - 1) / kReductionBlock;
  std::vector<double> parts(n_blocks, 0.0);
  bool domain_error = false;
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::size_t b0 = b * kReductionBlock;
    const std::size_t b1 = std::min(n, b0 + kReductionBlock);
    double part = 0.0;
    for (std::size_t j = b0; j < b1; ++j) {
      const double p = counts[j], m = mean[j];
      if (p > 0.0 && !(m > 0.0)) {
#pragma omp atomic write
        domain_error = true;
        continue;
      }
      part += p > 0.0 ? p * std::log(p / m) + m - p : m;
    }
    parts[b] = part;
  }
  if (domain_error) {
    // Re-run serially to produce the diagnostic for the first offending pixel.
    return serial::deviance(counts, mean);
  }
  double total = 0.0;
  for (double p : parts) total += p;
  return total;
}

void poisson_prox(std::span<const double> candidate, std::span<const double> counts,
                  double step_over_n, std::span<double> out) {
  check_same_size(candidate.size(), counts.size(), "poisson_prox");
  check_same_size(candidate.size(), out.size(), "poisson_prox");
  const std::size_t n = out.size();
#pragma omp parallel for schedule(static) if (n > 4096)
  for (std::size_t j = 0; j < n; ++j)
    out[j] = poisson_prox_scalar(candidate[j], counts[j], step_over_n);
}

void apply_axis(const AxisStencil& stencil, const Dims& dims, int axis, bool adjoint,
                std::span<const double> in, std::span<double> out) {
  check_same_size(in.size(), dims.size(), "apply_axis");
  check_same_size(out.size(), dims.size(), "apply_axis");
  const LineLayout lay = layout(dims, axis);
  validate_stencil(stencil, lay.length);
#pragma omp parallel if (dims.size() > 4096)
  {
    std::vector<double> a(lay.length), b(lay.length);
#pragma omp for schedule(static)
    for (std::size_t l = 0; l < lay.n_lines; ++l) {
      const std::size_t o = lay.start(l, dims, axis);
      for (std::size_t i = 0; i < lay.length; ++i) a[i] = in[o + i * lay.stride];
      apply_line(stencil, adjoint, a.data(), b.data(), lay.length);
      for (std::size_t i = 0; i < lay.length; ++i) out[o + i * lay.stride] = b[i];
    }
  }
}

void accumulate_gaussians(const GridGeometry& g, std::span<const GaussianAtom> atoms,
                          std::span<double> out) {
  check_same_size(out.size(), g.size(), "accumulate_gaussians");
  const std::size_t nx = g.n_cols(), ny = g.n_rows(), nz = g.n_slices();
  const std::size_t na = atoms.size();
  std::vector<double> fx(na * nx), fy(na * ny), fz(na * nz);
#pragma omp parallel for schedule(static) if (na > 64)
  for (std::size_t a = 0; a < na; ++a)
    atom_factors(g, atoms[a], fx.data() + a * nx, fy.data() + a * ny, fz.data() + a * nz);
  const std::size_t n_lines = nz * ny;
#pragma omp parallel for schedule(static) if (n_lines * na > 4096)
  for (std::size_t l = 0; l < n_lines; ++l) {
    const std::size_t s = l / ny, r = l % ny;
    double* line = out.data() + l * nx;
    for (std::size_t a = 0; a < na; ++a) {
      const double coef = fz[a * nz + s] * fy[a * ny + r];
      if (coef == 0.0) continue;
      const double* gx = fx.data() + a * nx;
      for (std::size_t c = 0; c < nx; ++c) line[c] += coef * gx[c];
    }
  }
}

void bw_intensity(std::span<const double> radii, std::span<const double> axial, double bessel_scale,
                  double phase_scale, std::span<const double> nodes, std::span<const double> weights,
                  std::span<double> out) {
  check_same_size(out.size(), radii.size() * axial.size(), "bw_intensity");
  const std::size_t nr = radii.size(), nzv = axial.size(), nq = nodes.size();
  // Tabulate the Bessel factor per radius and the phase factor per depth once.
  std::vector<double> radial(nr * nq), cphase(nzv * nq), sphase(nzv * nq);
#pragma omp parallel for schedule(static)
  for (std::size_t ir = 0; ir < nr; ++ir)
    for (std::size_t q = 0; q < nq; ++q)
      radial[ir * nq + q] = weights[q] * ::j0(bessel_scale * radii[ir] * nodes[q]);
  for (std::size_t iz = 0; iz < nzv; ++iz)
    for (std::size_t q = 0; q < nq; ++q) {
      const double ph = phase_scale * axial[iz] * nodes[q] * nodes[q];
      cphase[iz * nq + q] = std::cos(ph);
      sphase[iz * nq + q] = std::sin(ph);
    }
#pragma omp parallel for collapse(2) schedule(static)
  for (std::size_t iz = 0; iz < nzv; ++iz)
    for (std::size_t ir = 0; ir < nr; ++ir) {
      const double* rw = radial.data() + ir * nq;
      const double* cw = cphase.data() + iz * nq;
      const double* sw = sphase.data() + iz * nq;
      double re = 0.0, im = 0.0;
      for (std::size_t q = 0; q < nq; ++q) {
        re += rw[q] * cw[q];
        im += rw[q] * sw[q];
      }
      out[iz * nr + ir] = re * re + im * im;
    }
}

}  // namespace parallel

}  // namespace psfmix::kernels
