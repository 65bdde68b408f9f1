#include "psfmix/asb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "psfmix/errors.hpp"
#include "psfmix/likelihood.hpp"

namespace psfmix {

void SolverConfig::validate(std::size_t n_kernels) const {
  if (lambdas.size() != n_kernels)
    throw ValidationError("solver: expected " + std::to_string(n_kernels) + " lambdas, got " +
                          std::to_string(lambdas.size()));
  for (double l : lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ValidationError("solver: lambda must be >= 0");
  if (rho && (!(*rho > 0.0) || !std::isfinite(*rho)))
    throw ValidationError("solver: rho must be > 0");
  if (max_iters == 0) throw ValidationError("solver: max_iters must be > 0");
  if (!(tol_primal > 0.0) || !(tol_obj > 0.0))
    throw ValidationError("solver: tolerances must be > 0");
}

double SolverConfig::resolve_rho(std::span<const double> counts) const {
  if (rho) return *rho;
  double peak = 0.0;
  for (double p : counts) peak = std::max(peak, p);
  return kAutoRhoFactor * static_cast<double>(counts.size()) * std::max(peak, 1.0);
}

DenseLs::DenseLs(const Eigen::MatrixXd& b) {
  Eigen::MatrixXd a = b.transpose() * b;
  a.diagonal().array() += 2.0;
  llt_.compute(a);
  if (llt_.info() != Eigen::Success) throw NumericalError("Cholesky factorization failed");
}

void DenseLs::solve(std::span<const double> rhs, std::span<double> out) const {
  Eigen::Map<const Eigen::VectorXd> r(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size())) = llt_.solve(r);
}

double max_column_mass(const KernelOperator& b) {
  std::vector<double> ones(b.rows(), 1.0), mass(b.cols());
  b.adjoint(ones, mass);
  double m = 0.0;
  for (double v : mass) m = std::max(m, std::abs(v));
  return m;
}

namespace {

CalibrationBlock dense_block(const Eigen::MatrixXd& b) {
  double s = b.cwiseAbs().colwise().sum().maxCoeff();
  if (!(s > 0.0)) s = 1.0;
  Eigen::MatrixXd normalized = b / s;
  auto ls = std::make_unique<DenseLs>(normalized);
  return {std::make_unique<DenseBlur>(std::move(normalized)), std::move(ls), s};
}

// Reflexive blur applied through the transform domain; B is symmetric there.
class SpectralBlur final : public KernelOperator {
 public:
  explicit SpectralBlur(SpectralOperator op) : op_(std::move(op)) {}
  std::size_t rows() const override { return op_.dims().size(); }
  std::size_t cols() const override { return op_.dims().size(); }
  void apply(std::span<const double> w, std::span<double> out) const override { op_.apply(w, out); }
  void adjoint(std::span<const double> v, std::span<double> out) const override {
    op_.apply(v, out);
  }

 private:
  SpectralOperator op_;
};

}  // namespace

std::vector<CalibrationBlock> dense_blocks(std::span<const Eigen::MatrixXd> matrices) {
  std::vector<CalibrationBlock> blocks;
  for (const auto& m : matrices) blocks.push_back(dense_block(m));
  return blocks;
}

namespace {

bool spectral_applicable(const Dictionary& d, const GridGeometry& image) {
  if (!d.is_digital() || !(d.geometry->size() == image.size())) return false;
  const auto& g = *d.geometry;
  if (g.n_slices() != image.n_slices() || g.n_rows() != image.n_rows() ||
      g.n_cols() != image.n_cols() || g.lateral_sampling_nm() != image.lateral_sampling_nm() ||
      g.axial_sampling_nm() != image.axial_sampling_nm() || !(g.origin() == image.origin()))
    return false;
  for (const auto& k : d.kernels) {
    if (k.pixel_indices.size() != image.size()) return false;
    for (std::size_t i = 0; i < k.pixel_indices.size(); ++i)
      if (k.pixel_indices[i] != i) return false;
  }
  return true;
}

}  // namespace

std::vector<CalibrationBlock> calibration_blocks(const Dictionary& dictionary,
                                                 const GridGeometry& image, SolverPath path) {
  dictionary.validate();
  if (dictionary.kernels.empty()) throw ValidationError("calibration: empty dictionary");
  const bool spectral = spectral_applicable(dictionary, image);
  if (path == SolverPath::Spectral && !spectral)
    throw ValidationError(
        "spectral solver path needs a full digital dictionary on the image grid");
  std::vector<CalibrationBlock> blocks;
  if (spectral && path != SolverPath::Dense) {
    for (const auto& k : dictionary.kernels) {
      auto blur = std::make_unique<SeparableBlur>(k, image, image, Vec3{},
                                                  kernels::Boundary::Reflexive);
      double s = max_column_mass(*blur);
      if (!(s > 0.0)) s = 1.0;
      auto stencils = blur->stencils();
      for (double& t : stencils[0].taps) t /= s;
      auto ls = std::make_unique<SpectralLs>(SpectralOperator(stencils, blur->dims()));
      blocks.push_back(
          {std::make_unique<SpectralBlur>(SpectralOperator(stencils, blur->dims())), std::move(ls), s});
    }
    return blocks;
  }
  for (const auto& k : dictionary.kernels) blocks.push_back(dense_block(blur_matrix_dense(k, image, Vec3{})));
  return blocks;
}

std::vector<double> soft_threshold(std::span<const double> v, double t) {
  if (!(t >= 0.0)) throw ValidationError("soft_threshold: threshold must be >= 0");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]) - t;
    out[i] = a > 0.0 ? std::copysign(a, v[i]) : 0.0;
  }
  return out;
}

std::vector<double> project_nonneg(std::span<const double> v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i], 0.0);
  return out;
}

AsbSolver::AsbSolver(std::span<const double> counts, std::vector<CalibrationBlock> blocks,
                     double background, SolverConfig config)
    : counts_(counts.begin(), counts.end()),
      blocks_(std::move(blocks)),
      background_(background),
      config_(std::move(config)),
      rho_(config_.resolve_rho(counts)) {
  config_.validate(blocks_.size());
  if (!(background > 0.0)) throw ValidationError("solver: background must be > 0");
  for (double p : counts_)
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("solver: counts must be >= 0");
  const std::size_t n = counts_.size();
  state_.resize(blocks_.size());
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    if (blocks_[k].blur->rows() != n) throw ValidationError("solver: block rows differ from N");
    if (!(blocks_[k].scale > 0.0)) throw ValidationError("solver: block scale must be > 0");
    const std::size_t m = blocks_[k].blur->cols();
    auto& s = state_[k];
    s.w_hat.assign(m, 0.0);
    s.w1.assign(n, 0.0);
    s.b1.assign(n, 0.0);
    s.w2.assign(m, 0.0);
    s.w3.assign(m, 0.0);
    s.b2.assign(m, 0.0);
    s.b3.assign(m, 0.0);
  }
  sum_.assign(n, background_);
}

std::vector<double> AsbSolver::returned_weights() const {
  std::vector<double> w;
  for (std::size_t k = 0; k < state_.size(); ++k)
    for (double v : state_[k].w2) w.push_back(std::max(0.0, v) / blocks_[k].scale);
  return w;
}

double AsbSolver::deviance_at(std::span<const double> w) const {
  const std::size_t n = counts_.size();
  std::vector<double> mu(n, background_), tmp(n);
  std::size_t off = 0;
  std::vector<double> u;
  for (const auto& b : blocks_) {
    const std::size_t m = b.blur->cols();
    u.assign(w.begin() + static_cast<std::ptrdiff_t>(off), w.begin() + static_cast<std::ptrdiff_t>(off + m));
    for (double& v : u) v *= b.scale;
    b.blur->apply(u, tmp);
    for (std::size_t j = 0; j < n; ++j) mu[j] += tmp[j];
    off += m;
  }
  return deviance(counts_, mu);
}

double AsbSolver::objective(std::span<const double> w) const {
  double reg = 0.0;
  std::size_t off = 0;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    const std::size_t m = blocks_[k].blur->cols();
    double l1 = 0.0;
    for (std::size_t i = 0; i < m; ++i) l1 += std::abs(w[off + i]);
    reg += config_.lambdas[k] * l1;
    off += m;
  }
  return deviance_at(w) / static_cast<double>(counts_.size()) + reg;
}

IterationRecord AsbSolver::step() {
  const std::size_t n = counts_.size();
  double primal2 = 0.0, dual2 = 0.0;
  std::size_t n_entries = 0;
  std::vector<double> tmp_n(n), cand(n), mu(n), r(n);
  IterationRecord rec;
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    auto& s = state_[k];
    const auto& blk = blocks_[k];
    const std::size_t m = s.w_hat.size();
    n_entries += n + 2 * m;
    std::vector<double> rhs(m), bw(n);
    // Least squares on the stacked operator [B; I; I].
    for (std::size_t j = 0; j < n; ++j) tmp_n[j] = s.w1[j] - s.b1[j];
    blk.blur->adjoint(tmp_n, rhs);
    for (std::size_t i = 0; i < m; ++i) rhs[i] += s.w2[i] - s.b2[i] + s.w3[i] - s.b3[i];
    blk.ls->solve(rhs, s.w_hat);
    blk.blur->apply(s.w_hat, bw);

    // Data term through the residual of the other kernels.
    for (std::size_t j = 0; j < n; ++j) {
      r[j] = sum_[j] - s.w1[j];
      cand[j] = s.b1[j] + bw[j] + r[j];
    }
    poisson_prox(cand, counts_, rho_, n, mu);
    std::vector<double> dw1(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double w1 = mu[j] - r[j];
      dw1[j] = w1 - s.w1[j];
      sum_[j] += dw1[j];
      s.w1[j] = w1;
      s.b1[j] += bw[j] - w1;
      const double pr = bw[j] - w1;
      primal2 += pr * pr;
    }
    const double t = rho_ * config_.lambdas[k] / blk.scale;
    std::vector<double> od(m);
    blk.blur->adjoint(dw1, od);
    std::size_t support = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double v2 = s.b2[i] + s.w_hat[i];
      const double a = std::abs(v2) - t;
      const double w2 = a > 0.0 ? std::copysign(a, v2) : 0.0;
      const double w3 = std::max(0.0, s.b3[i] + s.w_hat[i]);
      od[i] += (w2 - s.w2[i]) + (w3 - s.w3[i]);
      s.w2[i] = w2;
      s.w3[i] = w3;
      s.b2[i] += s.w_hat[i] - w2;
      s.b3[i] += s.w_hat[i] - w3;
      const double p2 = s.w_hat[i] - w2, p3 = s.w_hat[i] - w3;
      primal2 += p2 * p2 + p3 * p3;
      dual2 += od[i] * od[i];
      if (w2 > 0.0) ++support;
    }
    rec.support.push_back(support);
  }
  ++iteration_;
  const double scale = std::sqrt(static_cast<double>(std::max<std::size_t>(n_entries, 1)));
  rec.iteration = iteration_;
  rec.primal_residual = std::sqrt(primal2) / scale;
  rec.dual_residual = std::sqrt(dual2) / scale;
  rec.rho = rho_;
  const auto w = returned_weights();
  rec.objective = objective(w);

  if (config_.rho_policy == RhoPolicy::Balanced && iteration_ % 10 == 0 && iteration_ <= 1000) {
    // Scaled duals follow rho: b = rho y.
    const double s_scaled = rec.dual_residual / rho_;
    double factor = 1.0;
    if (rec.primal_residual > 10.0 * s_scaled)
      factor = 0.5;
    else if (s_scaled > 10.0 * rec.primal_residual)
      factor = 2.0;
    if (factor != 1.0) {
      rho_ *= factor;
      for (auto& st : state_) {
        for (double& b : st.b1) b *= factor;
        for (double& b : st.b2) b *= factor;
        for (double& b : st.b3) b *= factor;
      }
    }
  }
  return rec;
}

SolverResult AsbSolver::run() {
  SolverResult res;
  double best = std::numeric_limits<double>::infinity();
  double prev = std::numeric_limits<double>::quiet_NaN();
  std::size_t calm = 0;
  for (std::size_t it = 0; it < config_.max_iters; ++it) {
    auto rec = step();
    const double obj = rec.objective;
    if (obj < best) {
      best = obj;
      res.weights = returned_weights();
    }
    if (std::isfinite(prev) && std::abs(obj - prev) <= config_.tol_obj * std::max(std::abs(obj), 1e-300))
      ++calm;
    else
      calm = 0;
    prev = obj;
    const bool residuals = rec.primal_residual < config_.tol_primal &&
                           rec.dual_residual < config_.tol_primal;
    res.trace.push_back(std::move(rec));
    if (residuals || calm >= config_.obj_patience) {
      res.converged = true;
      break;
    }
  }
  res.iterations = iteration_;
  if (res.converged) res.weights = returned_weights();
  res.deviance = deviance_at(res.weights);
  res.objective = objective(res.weights);
  return res;
}

SolverResult solve_calibration(std::span<const double> counts, const Dictionary& dictionary,
                               const GridGeometry& image, double background,
                               const SolverConfig& config, SolverPath path) {
  if (counts.size() != image.size()) throw ValidationError("calibration: counts size mismatch");
  AsbSolver solver(counts, calibration_blocks(dictionary, image, path), background, config);
  return solver.run();
}

std::size_t poisson_quantile(double mean, double q) {
  if (!(mean >= 0.0) || !(q > 0.0 && q < 1.0))
    throw ValidationError("poisson_quantile: need mean >= 0 and 0 < q < 1");
  if (mean == 0.0) return 0;
  const double log_mean = std::log(mean);
  const std::size_t cap = static_cast<std::size_t>(mean + 60.0 * std::sqrt(mean) + 100.0);
  double cdf = 0.0;
  for (std::size_t y = 0; y <= cap; ++y) {
    const double yd = static_cast<double>(y);
    cdf += std::exp(-mean + yd * log_mean - std::lgamma(yd + 1.0));
    if (cdf >= q) return y;
  }
  return cap;
}

std::vector<double> support_thresholds(const Dictionary& dictionary, double background_rate,
                                       double integration_volume) {
  if (!(integration_volume > 0.0)) throw ValidationError("support: integration volume must be > 0");
  const double y_min =
      static_cast<double>(poisson_quantile(integration_volume * background_rate, 0.99));
  // The rate-unit threshold y_min c^-1 / C_k, times c for integrated weights.
  std::vector<double> t;
  for (const auto& k : dictionary.kernels) t.push_back(y_min / k.params.normalization());
  return t;
}

SupportEstimate estimate_support(std::span<const double> weights, const Dictionary& dictionary,
                                 std::span<const double> thresholds) {
  if (weights.size() != dictionary.size())
    throw ValidationError("support: weight count differs from dictionary size");
  if (thresholds.size() != dictionary.kernels.size())
    throw ValidationError("support: one threshold per kernel required");
  SupportEstimate s;
  s.thresholds.assign(thresholds.begin(), thresholds.end());
  std::size_t flat = 0;
  for (std::size_t k = 0; k < dictionary.kernels.size(); ++k)
    for (std::size_t m = 0; m < dictionary.kernels[k].size(); ++m, ++flat)
      if (weights[flat] > thresholds[k]) {
        s.atoms.push_back({k, m});
        s.flat.push_back(flat);
        s.weights.push_back(weights[flat]);
      }
  s.effective = restrict_dictionary(dictionary, s.atoms);
  return s;
}

SupportEstimate estimate_support(std::span<const double> weights, const Dictionary& dictionary,
                                 double background_rate, const CameraModel& camera) {
  const auto t = support_thresholds(dictionary, background_rate, camera.integration_volume());
  return estimate_support(weights, dictionary, t);
}

}  // namespace psfmix
