// Acceptance suite: one line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "psfmix/asb.hpp"
#include "psfmix/harness.hpp"
#include "psfmix/likelihood.hpp"
#include "psfmix/spectral.hpp"

using namespace psfmix;

namespace {

// Tolerances and budgets.
constexpr double kOneDPositionTolUm = 0.050;
constexpr int kOneDSeeds = 10, kOneDRequired = 8;
constexpr double kOneDBudgetSec = 30.0, kOneDCalibBudgetSec = 120.0, kSbwBudgetSec = 300.0;
constexpr int kOracleInstances = 25;
constexpr double kOracleRelTol = 1e-6;
constexpr std::size_t kProxTriples = 10000;
constexpr double kProxResidualTol = 1e-10, kLsRelTol = 1e-8;
constexpr int kGradInstances = 100;
constexpr double kGradRelTol = 1e-5, kVirtualSourceTol = 1e-12;
constexpr std::size_t kPoissonDraws = 100000;
constexpr double kPoissonBandSd = 5.0, kLogLinearTol = 1e-12;
constexpr double kD1SpreadFraction = 0.10;
constexpr std::size_t kRobustnessSeeds = 50, kLocalizationStacks = 100;

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// ---- 1: 1-D SG position ------------------------------------------------------

Outcome one_d_position() {
  const auto t0 = Clock::now();
  const auto c = preset_config(Dataset::Synthetic1D);
  int hits = 0;
  double worst = 0.0;
  for (int s = 1; s <= kOneDSeeds; ++s) {
    const auto photons = input_photons(c, static_cast<std::uint64_t>(s));
    const auto fit = fit_blind_sg(photons.values, photons.geometry, c.scene.background, c.sg_fit);
    const double err = std::abs(fit.position.x - c.scene.source.position.x);
    worst = std::max(worst, err);
    hits += err <= kOneDPositionTolUm;
  }
  const double secs = since(t0);
  return {hits >= kOneDRequired && secs < kOneDBudgetSec,
          fmt("%d/%d seeds within 50 nm, worst %.1f nm, %.1f s", hits, kOneDSeeds, worst * 1e3, secs)};
}

// ---- 2: 1-D GM calibration ---------------------------------------------------

Outcome one_d_calibration() {
  const auto t0 = Clock::now();
  const auto c = preset_config(Dataset::Synthetic1D);
  const auto photons = input_photons(c, 1);
  const auto prep = prepare_calibration(photons, c.acquisition.camera, c.background, c.background_rate, c.sg_fit);
  const auto cells = calibrate_dictionary(photons, c.acquisition.camera, prep, c.dictionaries[0], c.lambdas,
                                          {c.solver, c.threshold, 0});
  bool monotone = true;
  std::string sizes;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    sizes += (i ? "," : "") + std::to_string(cells[i].support);
    if (i > 0 && cells[i].support > cells[i - 1].support) monotone = false;
  }
  const bool ok0 = cells.front().status == "ok";
  const double dev_gm = cells.front().deviance_debiased, dev_sg = prep.sg.deviance;
  const double secs = since(t0);
  return {monotone && ok0 && dev_gm < dev_sg && secs < kOneDCalibBudgetSec,
          fmt("support %s, deviance GM %.2f < SG %.2f, %.1f s", sizes.c_str(), dev_gm, dev_sg, secs)};
}

// ---- 3: solver against the proximal-gradient oracle --------------------------

Outcome solver_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const GridGeometry shapes[] = {GridGeometry(1, 4, 8, 65.0, 200.0), GridGeometry(2, 4, 4, 65.0, 200.0),
                                 GridGeometry(1, 1, 32, 65.0, 200.0), GridGeometry(1, 5, 5, 65.0, 200.0)};
  double worst = 0.0;
  for (int rep = 0; rep < kOracleInstances; ++rep) {
    const auto& g = shapes[rep % 4];
    const auto extent = pixel_center(g, g.size() - 1);
    const std::size_t n_atoms = 4 + rep % 5;  // 4..8
    Dictionary d;
    d.placement = Placement::Analog;
    d.kernels.push_back({{70.0 + 40.0 * u(rng), 250.0}, {}, {}});
    d.kernels.push_back({{130.0 + 60.0 * u(rng), 400.0}, {}, {}});
    for (std::size_t i = 0; i < n_atoms; ++i)
      d.kernels[i % 2].positions.push_back({extent.x * u(rng), extent.y * u(rng), extent.z * u(rng)});
    const MixtureOperator op(d, g, {}, BlurMode::Exact);
    std::vector<double> w_true(n_atoms);
    for (double& x : w_true) x = u(rng) < 0.4 ? 0.0 : 0.02 * u(rng);
    const double beta = 1.0 + 4.0 * u(rng);
    const auto mu = mixture_mean(op, w_true, beta);
    std::vector<double> p(mu.size());
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::poisson_distribution<int>(mu[j])(rng);
    const std::vector<double> lambdas{1e-4 * (1.0 + 4.0 * u(rng)), 1e-4 * (1.0 + 4.0 * u(rng))};
    const Eigen::MatrixXd b = op.dense();
    const std::size_t sizes[2] = {d.kernels[0].size(), d.kernels[1].size()};
    const auto w_ref = oracle::prox_gradient_oracle(b, sizes, lambdas, p, beta);
    const double f_ref = oracle::objective_of(b, sizes, lambdas, p, beta, w_ref);
    SolverConfig cfg;
    cfg.lambdas = lambdas;
    cfg.tol_primal = 1e-10;
    cfg.max_iters = 50000;
    std::vector<Eigen::MatrixXd> mats{op.block(0).dense(), op.block(1).dense()};
    AsbSolver solver(p, dense_blocks(mats), beta, cfg);
    const auto res = solver.run();
    worst = std::max(worst, std::abs(res.objective - f_ref) / std::abs(f_ref));
  }
  return {worst <= kOracleRelTol, fmt("%d instances, worst relative objective gap %.2e", kOracleInstances, worst)};
}

// ---- 4: proximal maps and the spectral LS ------------------------------------

Outcome prox_and_ls() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uc(-20.0, 50.0), ulog(-4.0, 3.0);
  std::uniform_int_distribution<int> up(0, 50);
  double worst_prox = 0.0;
  std::vector<double> c(1), p(1), mu(1);
  for (std::size_t i = 0; i < kProxTriples; ++i) {
    c[0] = uc(rng);
    p[0] = i % 7 == 0 ? 0.0 : up(rng);
    const double t = std::pow(10.0, ulog(rng));
    poisson_prox(c, p, t, 1, mu);
    double r;
    if (p[0] == 0.0)
      r = std::abs(mu[0] - std::max(c[0] - t, 0.0));
    else
      r = std::abs(t * (1.0 - p[0] / mu[0]) + mu[0] - c[0]) / std::max({1.0, std::abs(c[0]), t});
    worst_prox = std::max(worst_prox, r);
  }

  std::normal_distribution<double> nd;
  double worst_ls = 0.0;
  for (const GridGeometry g : {GridGeometry(1, 1, 17, 65, 200), GridGeometry(1, 7, 9, 65, 200),
                               GridGeometry(5, 6, 7, 65, 200)}) {
    const std::vector<SingleGaussianParams> one{{120.0, 380.0}};
    const auto d = build_digital_dictionary(g, one);
    const SeparableBlur blur(d.kernels[0], g, g, {}, kernels::Boundary::Reflexive);
    const SpectralOperator op(blur.stencils(), blur.dims());
    std::vector<double> rhs(g.size()), a(g.size()), b(g.size());
    for (double& v : rhs) v = nd(rng);
    op.ls_solve(rhs, a);
    DenseLs(blur.dense()).solve(rhs, b);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      num += (a[j] - b[j]) * (a[j] - b[j]);
      den += b[j] * b[j];
    }
    worst_ls = std::max(worst_ls, std::sqrt(num / den));
  }

  bool exact_maps = true;
  std::vector<double> v(4096);
  for (double& x : v) x = 10.0 * nd(rng);
  v[0] = 0.0;
  v[1] = 1.5;
  v[2] = -1.5;
  const double thr = 1.5;
  const auto st = soft_threshold(v, thr);
  const auto pr = project_nonneg(v);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double ref = std::copysign(std::max(std::abs(v[i]) - thr, 0.0), v[i]);
    exact_maps = exact_maps && st[i] == (ref == 0.0 ? 0.0 : ref) && pr[i] == std::max(v[i], 0.0);
  }
  return {worst_prox < kProxResidualTol && worst_ls <= kLsRelTol && exact_maps,
          fmt("prox residual %.1e, LS relative error %.1e, closed forms %s", worst_prox, worst_ls,
              exact_maps ? "exact" : "differ")};
}

// ---- 5: gradient check -------------------------------------------------------

Outcome gradient_check() {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < kGradInstances; ++rep) {
    const std::size_t side = 3 + static_cast<std::size_t>(rep % 5);
    const std::size_t atoms = 2 + static_cast<std::size_t>(rep % 11);
    const GridGeometry g(1, side, side, 65.0, 200.0);
    Dictionary d;
    d.placement = Placement::Analog;
    d.kernels.push_back({{80.0, 250.0}, {}, {}});
    d.kernels.push_back({{140.0, 400.0}, {}, {}});
    const double extent = 0.065 * static_cast<double>(side - 1);
    for (std::size_t m = 0; m < atoms; ++m)
      d.kernels[m % 2].positions.push_back({extent * u(rng), extent * u(rng), 0.1 * u(rng)});
    const MixtureOperator op(d, g, {}, BlurMode::Exact);
    std::vector<double> w(atoms);
    for (double& x : w) x = 0.2 + 2.0 * u(rng);
    const double beta = 0.5 + u(rng);
    const auto mu = mixture_mean(op, w, beta);
    std::vector<double> p(mu.size());
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::poisson_distribution<int>(mu[j])(rng);
    const auto grad = deviance_grad_weights(p, op, w, beta);
    const double h = 1e-5;
    for (std::size_t i = 0; i < atoms; ++i) {
      auto wp = w, wm = w;
      wp[i] += h;
      wm[i] -= h;
      const double fd = (deviance(p, mixture_mean(op, wp, beta)) - deviance(p, mixture_mean(op, wm, beta))) / (2 * h);
      worst = std::max(worst, std::abs(grad[i] - fd) / std::max({1.0, std::abs(fd), std::abs(grad[i])}));
    }
  }
  return {worst <= kGradRelTol, fmt("%d instances, worst relative error %.2e", kGradInstances, worst)};
}

// ---- 6: forward-model invariants ---------------------------------------------

Outcome forward_invariants() {
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
    for (const auto& pos : k.positions) {
      const double wk = gm.weights[flat++];
      if (wk == 0.0) continue;
      const auto part = mean_stack({{x0 + (pos - centre), alpha * wk}, 0.0, k.params}, g);
      for (std::size_t j = 0; j < g.size(); ++j) ref[j] += part.values[j];
    }
  double vs = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) vs = std::max(vs, std::abs(mu.values[j] - ref[j]) / std::abs(ref[j]));

  bool moments = true;
  std::string bands;
  for (double m : {0.5, 10.0, 1000.0}) {
    const GridGeometry line(1, 1, kPoissonDraws, 10.0, 10.0);
    const ImageStack mean(line, std::vector<double>(line.size(), m), StackKind::MeanIntensity);
    const auto draws = sample_photons(mean, {99, static_cast<std::uint64_t>(m * 10)}).values;
    const double n = static_cast<double>(draws.size());
    const double avg = std::accumulate(draws.begin(), draws.end(), 0.0) / n;
    double var = 0.0;
    for (double x : draws) var += (x - avg) * (x - avg);
    var /= n - 1.0;
    const double z_mean = (avg - m) / std::sqrt(m / n);
    const double z_var = (var - m) / std::sqrt((m + 2.0 * m * m) / n);
    moments = moments && std::abs(z_mean) < kPoissonBandSd && std::abs(z_var) < kPoissonBandSd;
    bands += fmt(" %g:(%.1f,%.1f)", m, z_mean, z_var);
  }

  const GridGeometry desk(21, 21, 21, 65.0, 200.0);
  const auto bw = make_born_wolf({474.0, 1.45, 1.518}, desk);
  double loglin = 0.0;
  const double t0 = exposure_for_psnr(bw, desk.centre(), 112.7, desk, 0.004225, 0.0);
  for (double psnr : {-5.0, 3.0, 10.0, 17.5, 20.0, 40.0}) {
    const double t = exposure_for_psnr(bw, desk.centre(), 112.7, desk, 0.004225, psnr);
    loglin = std::max(loglin, std::abs(std::log10(t / t0) - 0.1 * psnr));
  }
  return {vs <= kVirtualSourceTol && moments && loglin <= kLogLinearTol,
          fmt("virtual sources %.1e, moment z-scores (mean,var)%s, log-linearity %.1e", vs, bands.c_str(), loglin)};
}

// ---- 7: SBW SG versus SGT ----------------------------------------------------

Outcome sbw_sg_vs_sgt() {
  const auto t0 = Clock::now();
  const auto c = preset_config(Dataset::SBW);
  const auto& g = c.acquisition.geometry;
  const auto photons = input_photons(c, 1);
  const auto fit = fit_blind_sg(photons.values, g, c.scene.background, c.sg_fit);
  const auto sgt = theoretical_sg(*c.acquisition.optics);
  CmaEsConfig cfg = c.sg_fit;
  cfg.max_evaluations = 3000;
  cfg.restarts = 0;
  const LocalizationModel model(sgt, g);
  const auto loc = localize_ps(photons.values, model, g, c.scene.background, cfg);
  const bool wider = fit.params.sigma_xy_nm > sgt.sigma_xy_nm && fit.params.sigma_z_nm > sgt.sigma_z_nm;
  const double secs = since(t0);
  return {wider && fit.deviance < loc.deviance && secs < kSbwBudgetSec,
          fmt("SG (%.0f, %.0f) nm > SGT (%.0f, %.0f) nm, deviance SG %.4g < SGT %.4g, %.1f s",
              fit.params.sigma_xy_nm, fit.params.sigma_z_nm, sgt.sigma_xy_nm, sgt.sigma_z_nm, fit.deviance,
              loc.deviance, secs)};
}

// ---- 8: trade-off pattern ----------------------------------------------------

Outcome tradeoff_pattern() {
  const auto c = preset_config(Dataset::SBW);
  const auto photons = input_photons(c, 1);
  const auto prep = prepare_calibration(photons, c.acquisition.camera, c.background, c.background_rate, c.sg_fit);
  const CalibrationOptions opt{c.solver, c.threshold, 0};
  // D1 is emptied near lambda = 5e-3, so its grid stops below that.
  const std::vector<std::vector<double>> d1_grid{{1e-4}, {1e-3}, {3e-3}};
  const std::vector<std::vector<double>> d2_grid{{1e-4}, {1e-3}, {5e-3}, {1e-2}};
  const auto d1 = calibrate_dictionary(photons, c.acquisition.camera, prep, c.dictionary("D1"), d1_grid, opt);
  const auto d2 = calibrate_dictionary(photons, c.acquisition.camera, prep, c.dictionary("D2"), d2_grid, opt);
  std::string s1, s2;
  double lo = 1e300, hi = 0.0, sum = 0.0;
  for (const auto& x : d1) {
    s1 += (s1.empty() ? "" : ",") + std::to_string(x.support);
    lo = std::min(lo, static_cast<double>(x.support));
    hi = std::max(hi, static_cast<double>(x.support));
    sum += static_cast<double>(x.support);
  }
  bool decreasing = d2.back().support < d2.front().support;
  for (std::size_t i = 0; i < d2.size(); ++i) {
    s2 += (s2.empty() ? "" : ",") + std::to_string(d2[i].support);
    if (i > 0 && d2[i].support > d2[i - 1].support) decreasing = false;
  }
  const double mean = sum / static_cast<double>(d1.size());
  const bool flat = mean > 0.0 && hi - lo <= kD1SpreadFraction * mean;
  return {decreasing && flat, fmt("D2 support %s; D1 support %s (spread %.0f, mean %.1f)", s2.c_str(),
                                  s1.c_str(), hi - lo, mean)};
}

// ---- 9: robustness -----------------------------------------------------------

Outcome robustness() {
  auto c = preset_config(Dataset::SBW);
  c.robustness.realizations = kRobustnessSeeds;
  const auto rep = run_robustness(c, 1, 0);
  std::vector<double> fano;
  for (const auto& b : rep.bins)
    if (b.fano) fano.push_back(*b.fano);
  if (fano.size() < 3) return {false, "fewer than three populated weight bins"};
  const std::size_t third = fano.size() / 3;
  const double low = std::accumulate(fano.begin(), fano.begin() + static_cast<long>(third), 0.0) / third;
  const double high = std::accumulate(fano.end() - static_cast<long>(third), fano.end(), 0.0) / third;

  const auto& m = rep.mean.values;
  const auto& s = rep.std.values;
  const std::size_t js = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  const double peak = *std::max_element(m.begin(), m.end());
  const bool tail = m[js] < 0.5 * peak;
  return {high < low && tail,
          fmt("Fano top third %.3f < bottom third %.3f; max std at %.1f%% of the peak; support %.1f +- %.1f",
              high, low, 100.0 * m[js] / peak, rep.support_mean, rep.support_std)};
}

// ---- 10: localization --------------------------------------------------------

Outcome localization() {
  auto c = preset_config(Dataset::SBW);
  c.localization.n_stacks = kLocalizationStacks;
  c.localization.psnr_db = {10.0, 20.0};
  const auto models = resolve_models(c, 1, 0);
  const auto rep = run_localization(c, models, 1, 0);
  bool ok = true;
  std::string detail;
  for (double psnr : c.localization.psnr_db) {
    auto get = [&](const std::string& name) -> const LocalizationSummary& {
      for (const auto& s : rep.summary)
        if (s.model == name && s.psnr_db == psnr) return s;
      throw std::runtime_error("missing summary row");
    };
    const auto& bw = get("BW");
    const auto& sg = get("SG");
    const auto& sgt = get("SGT");
    for (const auto& s : rep.summary) {
      if (s.psnr_db != psnr) continue;
      ok = ok && bw.median_position_error_nm <= s.median_position_error_nm;
      if (s.model.rfind("GM", 0) == 0)
        ok = ok && s.median_intensity_error < sg.median_intensity_error &&
             s.median_intensity_error < sgt.median_intensity_error;
    }
    detail += fmt("%s%g dB pos[nm]", detail.empty() ? "" : "; ", psnr);
    for (const auto& s : rep.summary)
      if (s.psnr_db == psnr) detail += fmt(" %s=%.1f", s.model.c_str(), s.median_position_error_nm);
    detail += " int";
    for (const auto& s : rep.summary)
      if (s.psnr_db == psnr) detail += fmt(" %s=%.3f", s.model.c_str(), s.median_intensity_error);
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number.
  std::vector<bool> selected(11, argc == 1);
  for (int a = 1; a < argc; ++a) {
    const int k = std::atoi(argv[a]);
    if (k >= 1 && k <= 10) selected[static_cast<std::size_t>(k)] = true;
  }
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"1-D SG position", one_d_position},
      {"1-D GM calibration", one_d_calibration},
      {"solver oracle", solver_oracle},
      {"prox and LS suite", prox_and_ls},
      {"gradient check", gradient_check},
      {"forward invariants", forward_invariants},
      {"SBW SG vs SGT", sbw_sg_vs_sgt},
      {"trade-off pattern", tradeoff_pattern},
      {"robustness", robustness},
      {"localization orderings", localization},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i + 1]) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %-24s %s  %s [%.1f s]\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
