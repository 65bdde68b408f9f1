#include "psfmix/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "psfmix/errors.hpp"
#include "psfmix/likelihood.hpp"

namespace psfmix {

DebiasResult debias(std::span<const double> counts, const MixtureOperator& op, double background,
                    std::span<const double> start, const LbfgsbConfig& config) {
  if (op.cols() == 0) throw ValidationError("debias: empty effective dictionary");
  if (start.size() != op.cols()) throw ValidationError("debias: warm start size mismatch");
  if (counts.size() != op.rows()) throw ValidationError("debias: counts size mismatch");
  std::vector<double> mu(op.rows());
  const GradientObjective f = [&](std::span<const double> w, std::span<double> grad) {
    op.apply(w, mu);
    for (double& v : mu) v += background;
    const double dev = deviance(counts, mu);
    const auto g = deviance_grad_from_mean(counts, mu, op);
    std::copy(g.begin(), g.end(), grad.begin());
    return dev;
  };
  std::vector<double> x0(start.begin(), start.end());
  for (double& v : x0) v = std::max(v, 0.0);
  const std::vector<double> lower(x0.size(), 0.0);
  DebiasResult res;
  {
    std::vector<double> g(x0.size());
    res.deviance_start = f(x0, g);
  }
  auto opt = lbfgsb_minimize(f, x0, lower, {}, config);
  res.weights = std::move(opt.x);
  res.deviance_final = opt.f;
  res.iterations = opt.iterations;
  res.converged = opt.converged;
  res.trace = std::move(opt.trace);
  res.ps_intensity = std::accumulate(res.weights.begin(), res.weights.end(), 0.0);
  if (res.ps_intensity > 0.0) {
    res.normalized_weights.reserve(res.weights.size());
    for (double w : res.weights) res.normalized_weights.push_back(w / res.ps_intensity);
  } else {
    res.degenerate = true;
  }
  return res;
}

DebiasResult debias(std::span<const double> counts, const Dictionary& effective,
                    const GridGeometry& image, double background, std::span<const double> start,
                    BlurMode mode, const LbfgsbConfig& config) {
  if (effective.size() == 0) throw ValidationError("debias: empty effective dictionary");
  const MixtureOperator op(effective, image, Vec3{}, mode);
  return debias(counts, op, background, start, config);
}

double profile_intensity(std::span<const double> p, std::span<const double> psi, double beta,
                         double* deviance_out) {
  if (p.size() != psi.size()) throw ValidationError("profile_intensity: size mismatch");
  const std::size_t n = p.size();
  double alpha = 0.0;
  double sum_psi = 0.0;
  for (double v : psi) sum_psi += v;
  if (beta <= 0.0) {
    const double sum_p = std::accumulate(p.begin(), p.end(), 0.0);
    alpha = sum_psi > 0.0 ? sum_p / sum_psi : 0.0;
  } else {
    // D(alpha) = sum psi (1 - p / (alpha psi + beta)) is concave and
    // increasing, so Newton steps from the left approach the root monotonically.
    for (int it = 0; it < 200; ++it) {
      double d = 0.0, dd = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double mu = alpha * psi[j] + beta;
        const double r = p[j] / mu;
        d += psi[j] * (1.0 - r);
        dd += r * psi[j] * psi[j] / mu;
      }
      if (d >= 0.0 || !(dd > 0.0)) break;
      const double next = alpha - d / dd;
      if (!(next > alpha)) break;
      const bool done = next - alpha <= 1e-14 * next;
      alpha = next;
      if (done) break;
    }
  }
  if (deviance_out) {
    double dev = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      dev += kernels::deviance_term(p[j], alpha * psi[j] + beta);
    *deviance_out = dev;
  }
  return alpha;
}

PositionBox position_box(const GridGeometry& g) { return {g.min_corner(), g.max_corner()}; }

namespace {

// Parameter vector layout shared by the blind fits: source coordinates on
// the axes that have more than one pixel, followed by model parameters.
struct PositionLayout {
  std::vector<int> axes;  // 0 = x, 1 = y, 2 = z
  Vec3 fixed;

  explicit PositionLayout(const GridGeometry& g) {
    fixed = g.min_corner();
    if (g.n_cols() > 1) axes.push_back(0);
    if (g.n_rows() > 1) axes.push_back(1);
    if (g.n_slices() > 1) axes.push_back(2);
  }
  static double& coord(Vec3& v, int a) { return a == 0 ? v.x : (a == 1 ? v.y : v.z); }
  static double coord(const Vec3& v, int a) { return a == 0 ? v.x : (a == 1 ? v.y : v.z); }
  Vec3 decode(std::span<const double> x) const {
    Vec3 v = fixed;
    for (std::size_t i = 0; i < axes.size(); ++i) coord(v, axes[i]) = x[i];
    return v;
  }
  void bounds(const GridGeometry& g, std::vector<double>& lo, std::vector<double>& hi) const {
    const auto box = position_box(g);
    for (int a : axes) {
      lo.push_back(coord(box.lower, a));
      hi.push_back(coord(box.upper, a));
    }
  }
  std::vector<double> start(const Vec3& v) const {
    std::vector<double> s;
    for (int a : axes) s.push_back(coord(v, a));
    return s;
  }
};

Vec3 brightest_pixel(std::span<const double> counts, const GridGeometry& g) {
  const auto it = std::max_element(counts.begin(), counts.end());
  return pixel_center(g, static_cast<std::size_t>(it - counts.begin()));
}

// Deviance after profiling the intensity; +inf where the model leaves a
// counted pixel with zero mean.
double profiled_deviance(std::span<const double> counts, std::span<const double> shape,
                         double background) {
  double dev = 0.0;
  try {
    profile_intensity(counts, shape, background, &dev);
  } catch (const DomainError&) {
    return std::numeric_limits<double>::infinity();
  }
  return dev;
}

CmaEsConfig with_start(const CmaEsConfig& config, std::vector<double> start) {
  CmaEsConfig c = config;
  if (c.initial_mean.empty()) c.initial_mean = std::move(start);
  return c;
}

}  // namespace

SgFit fit_blind_sg(std::span<const double> counts, const GridGeometry& g, double background,
                   const CmaEsConfig& config) {
  if (counts.size() != g.size() || counts.empty())
    throw ValidationError("fit_blind_sg: counts do not match the grid");
  const PositionLayout layout(g);
  const bool fit_z_width = g.n_slices() > 1;
  BoxProblem prob;
  layout.bounds(g, prob.lower, prob.upper);
  const std::size_t np = layout.axes.size();
  const double dxy = g.lateral_sampling_nm();
  prob.lower.push_back(dxy / 4.0);
  prob.upper.push_back(20.0 * dxy);
  if (fit_z_width) {
    prob.lower.push_back(dxy / 4.0);
    prob.upper.push_back(20.0 * dxy);
  }
  auto decode = [&](std::span<const double> x) {
    SingleGaussianParams s{x[np], fit_z_width ? x[np + 1] : x[np]};
    return std::pair{layout.decode(x), s};
  };
  prob.objective = [&](std::span<const double> x) {
    const auto [pos, s] = decode(x);
    std::vector<double> shape(g.size());
    sg_on_grid(s, g, pos, 1.0, shape);
    return profiled_deviance(counts, shape, background);
  };
  auto start = layout.start(brightest_pixel(counts, g));
  start.push_back(2.0 * dxy);
  if (fit_z_width) start.push_back(4.0 * dxy);
  const auto res = cmaes_minimize(prob, with_start(config, start));
  const auto [pos, s] = decode(res.x);
  std::vector<double> shape(g.size());
  sg_on_grid(s, g, pos, 1.0, shape);
  SgFit fit;
  fit.position = pos;
  fit.params = s;
  fit.intensity = profile_intensity(counts, shape, background, &fit.deviance);
  fit.evaluations = res.evaluations;
  return fit;
}

BwFit fit_blind_bw(std::span<const double> counts, const GridGeometry& g, double background,
                   const CmaEsConfig& config, const BwFitBounds& bounds) {
  if (counts.size() != g.size() || counts.empty())
    throw ValidationError("fit_blind_bw: counts do not match the grid");
  const PositionLayout layout(g);
  BoxProblem prob;
  layout.bounds(g, prob.lower, prob.upper);
  const std::size_t np = layout.axes.size();
  for (const double* b : {bounds.wavelength_nm, bounds.numerical_aperture, bounds.refractive_index}) {
    prob.lower.push_back(b[0]);
    prob.upper.push_back(b[1]);
  }
  auto decode = [&](std::span<const double> x) {
    return std::pair{layout.decode(x), BornWolfParams{x[np], x[np + 1], x[np + 2]}};
  };
  // The normalization constant is a pure scale, so it is folded into the
  // profiled intensity and applied once at the end.
  auto shape_of = [&](const Vec3& pos, const BornWolfParams& bw, std::vector<double>& shape) {
    bw_on_grid(BornWolfPsf{bw, 1.0}, g, pos, 1.0, shape);
  };
  prob.objective = [&](std::span<const double> x) {
    const auto [pos, bw] = decode(x);
    std::vector<double> shape(g.size());
    shape_of(pos, bw, shape);
    return profiled_deviance(counts, shape, background);
  };
  auto start = layout.start(brightest_pixel(counts, g));
  for (const double* b : {bounds.wavelength_nm, bounds.numerical_aperture, bounds.refractive_index})
    start.push_back(0.5 * (b[0] + b[1]));
  const auto res = cmaes_minimize(prob, with_start(config, start));
  const auto [pos, bw] = decode(res.x);
  std::vector<double> shape(g.size());
  shape_of(pos, bw, shape);
  BwFit fit;
  fit.position = pos;
  fit.params = bw;
  const double scaled = profile_intensity(counts, shape, background, &fit.deviance);
  fit.intensity = scaled / make_born_wolf(bw, g).normalization;
  fit.evaluations = res.evaluations;
  return fit;
}

double mixture_peak(const GaussianMixtureModel& model) {
  const auto support = model.support_indices();
  if (support.empty()) throw NumericalError("mixture_peak: empty support");
  if (model.dictionary.geometry) {
    const auto atoms = model.support();
    const Dictionary eff = restrict_dictionary(model.dictionary, atoms);
    std::vector<double> w;
    for (const auto& a : atoms) w.push_back(model.weights[model.dictionary.offset(a.kernel) + a.atom]);
    const MixtureOperator op(eff, *model.dictionary.geometry, Vec3{}, BlurMode::Exact);
    std::vector<double> sampled(op.rows());
    op.apply(w, sampled);
    return *std::max_element(sampled.begin(), sampled.end());
  }
  // Candidate starts: the heaviest atoms and the weighted centroid.
  std::vector<std::pair<double, Vec3>> atoms;
  Vec3 centroid{};
  double min_sigma = std::numeric_limits<double>::infinity();
  std::size_t flat = 0;
  for (const auto& k : model.dictionary.kernels) {
    for (std::size_t m = 0; m < k.size(); ++m, ++flat) {
      const double w = model.weights[flat];
      if (w <= 0.0) continue;
      const Vec3 off = k.positions[m] - model.centre;
      atoms.emplace_back(w, off);
      centroid = centroid + w * off;
      min_sigma = std::min({min_sigma, k.params.sigma_xy_um(), k.params.sigma_z_um()});
    }
  }
  std::stable_sort(atoms.begin(), atoms.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Vec3> starts;
  for (std::size_t i = 0; i < std::min<std::size_t>(atoms.size(), 10); ++i)
    starts.push_back(atoms[i].second);
  starts.push_back(centroid);
  double best = 0.0;
  for (Vec3 x : starts) {
    double fx = eval_gm(model, x);
    for (double h = 0.5 * min_sigma; h > 1e-7; h *= 0.5) {
      bool moved = true;
      while (moved) {
        moved = false;
        for (int a = 0; a < 3; ++a)
          for (double sgn : {1.0, -1.0}) {
            Vec3 y = x;
            (a == 0 ? y.x : (a == 1 ? y.y : y.z)) += sgn * h;
            const double fy = eval_gm(model, y);
            if (fy > fx) {
              x = y;
              fx = fy;
              moved = true;
            }
          }
      }
    }
    best = std::max(best, fx);
  }
  return best;
}

LocalizationModel::LocalizationModel(PsfModel psf, const GridGeometry& geometry)
    : psf_(std::move(psf)), geometry_(geometry) {
  if (const auto* bw = std::get_if<BornWolfPsf>(&psf_)) {
    bw->params.validate();
    peak_ = 0.25 * bw->normalization;
    const Vec3 ext = geometry.max_corner() - geometry.min_corner();
    table_.emplace(*bw, std::hypot(ext.x, ext.y) + 0.02, -ext.z - 0.02, ext.z + 0.02);
  } else if (const auto* sg = std::get_if<SingleGaussianParams>(&psf_)) {
    sg->validate();
    peak_ = sg->normalization();
  } else {
    const auto& gm = std::get<GaussianMixtureModel>(psf_);
    gm.validate();
    const auto support = gm.support();
    effective_ = restrict_dictionary(gm.dictionary, support);
    peak_ = mixture_peak(gm);
    for (const auto& a : support)
      support_weights_.push_back(gm.weights[gm.dictionary.offset(a.kernel) + a.atom] / peak_);
  }
}

std::size_t LocalizationModel::support_size() const {
  if (std::holds_alternative<GaussianMixtureModel>(psf_)) return support_weights_.size();
  return 1;
}

void LocalizationModel::shape(Vec3 x0, std::span<double> out) const {
  if (table_) {
    table_->on_grid(geometry_, x0, 1.0 / peak_, out);
  } else if (const auto* sg = std::get_if<SingleGaussianParams>(&psf_)) {
    sg_on_grid(*sg, geometry_, x0, 1.0 / peak_, out);
  } else {
    const auto& gm = std::get<GaussianMixtureModel>(psf_);
    const MixtureOperator op(effective_, geometry_, x0 - gm.centre, BlurMode::Exact);
    op.apply(support_weights_, out);
  }
}

LocalizationFit localize_ps(std::span<const double> counts, const LocalizationModel& model,
                            const GridGeometry& g, double background, const CmaEsConfig& config) {
  if (counts.size() != g.size()) throw ValidationError("localize_ps: counts do not match the grid");
  const PositionLayout layout(g);
  BoxProblem prob;
  layout.bounds(g, prob.lower, prob.upper);
  if (prob.lower.empty()) throw ValidationError("localize_ps: grid has no extended axis");
  prob.objective = [&](std::span<const double> x) {
    std::vector<double> shape(g.size());
    model.shape(layout.decode(x), shape);
    return profiled_deviance(counts, shape, background);
  };
  const auto res = cmaes_minimize(prob, with_start(config, layout.start(brightest_pixel(counts, g))));
  LocalizationFit fit;
  fit.position = layout.decode(res.x);
  std::vector<double> shape(g.size());
  model.shape(fit.position, shape);
  fit.intensity = profile_intensity(counts, shape, background, &fit.deviance);
  fit.evaluations = res.evaluations;
  return fit;
}

}  // namespace psfmix
