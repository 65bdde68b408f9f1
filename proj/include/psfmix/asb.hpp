#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "psfmix/blur.hpp"
#include "psfmix/dictionary.hpp"
#include "psfmix/spectral.hpp"

namespace psfmix {

enum class RhoPolicy {
  Fixed,     // rho stays at its configured value
  Balanced,  // rescaled to keep primal and dual residuals within a factor 10
};

inline constexpr double kAutoRhoFactor = 10.0;

struct SolverConfig {
  std::vector<double> lambdas;  // one per kernel
  // Prox step; unset selects kAutoRhoFactor * N * max(p).
  std::optional<double> rho;
  RhoPolicy rho_policy = RhoPolicy::Fixed;
  std::size_t max_iters = 2000;
  double tol_primal = 1e-6;
  double tol_obj = 1e-9;
  std::size_t obj_patience = 10;  // consecutive small objective changes needed

  void validate(std::size_t n_kernels) const;
  double resolve_rho(std::span<const double> counts) const;
};

/// (2 I + B_k^T B_k)^{-1} applied to a vector.
class LsSolver {
 public:
  virtual ~LsSolver() = default;
  virtual void solve(std::span<const double> rhs, std::span<double> out) const = 0;
};

/// Cholesky factor cached at construction.
class DenseLs final : public LsSolver {
 public:
  explicit DenseLs(const Eigen::MatrixXd& b);
  void solve(std::span<const double> rhs, std::span<double> out) const override;

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

class SpectralLs final : public LsSolver {
 public:
  explicit SpectralLs(SpectralOperator op) : op_(std::move(op)) {}
  void solve(std::span<const double> rhs, std::span<double> out) const override {
    op_.ls_solve(rhs, out);
  }
  const SpectralOperator& op() const { return op_; }

 private:
  SpectralOperator op_;
};

/// One kernel of the calibration problem. The solver iterates on u_k = s_k w_k
/// with the column-mass normalized operator B_k / s_k, so `blur` and `ls` hold
/// the normalized operator and `scale` is s_k.
struct CalibrationBlock {
  std::unique_ptr<KernelOperator> blur;
  std::unique_ptr<LsSolver> ls;
  double scale = 1.0;
};

/// Largest column sum of |B|.
double max_column_mass(const KernelOperator& b);

/// Dense blocks from explicit matrices (used for tiny problems and tests).
std::vector<CalibrationBlock> dense_blocks(std::span<const Eigen::MatrixXd> matrices);

enum class SolverPath { Auto, Spectral, Dense };

/// Builds B_k(0) for every kernel. The spectral path uses reflexive operators
/// on the dictionary's own grid; the dense path uses exact entries.
std::vector<CalibrationBlock> calibration_blocks(const Dictionary& dictionary,
                                                 const GridGeometry& image, SolverPath path);

struct IterationRecord {
  std::size_t iteration = 0;
  double objective = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double rho = 0.0;
  std::vector<std::size_t> support;  // per kernel
};

struct SolverResult {
  std::vector<double> weights;  // max(0, w2), stacked over kernels
  double objective = 0.0;       // normalized deviance plus l1 term at `weights`
  double deviance = 0.0;        // unnormalized
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<IterationRecord> trace;
};

/// Fully split Bregman iteration with Gauss-Seidel sweeps over kernels.
class AsbSolver {
 public:
  AsbSolver(std::span<const double> counts, std::vector<CalibrationBlock> blocks,
            double background, SolverConfig config);

  /// One sweep over all kernels. Returns the record of the sweep.
  IterationRecord step();
  SolverResult run();

  std::size_t n_kernels() const { return blocks_.size(); }
  std::size_t n_pixels() const { return counts_.size(); }
  double rho() const { return rho_; }

  // State access for tests; weights are in the normalized unit u_k = s_k w_k.
  struct KernelState {
    std::vector<double> w_hat, w1, w2, w3, b1, b2, b3;
  };
  const KernelState& state(std::size_t k) const { return state_[k]; }
  const std::vector<double>& background_plus_w1() const { return sum_; }
  std::vector<double> returned_weights() const;
  /// Objective at a stacked weight vector.
  double objective(std::span<const double> w) const;
  double deviance_at(std::span<const double> w) const;

 private:
  std::vector<double> counts_;
  std::vector<CalibrationBlock> blocks_;
  double background_;
  SolverConfig config_;
  double rho_;
  std::vector<KernelState> state_;
  std::vector<double> sum_;  // beta + sum_k w1_k
  std::size_t iteration_ = 0;
};

SolverResult solve_calibration(std::span<const double> counts, const Dictionary& dictionary,
                               const GridGeometry& image, double background,
                               const SolverConfig& config, SolverPath path = SolverPath::Auto);

std::vector<double> soft_threshold(std::span<const double> v, double t);
std::vector<double> project_nonneg(std::span<const double> v);

/// Smallest y with P(X <= y) >= q for X ~ Poisson(mean), by CDF summation.
std::size_t poisson_quantile(double mean, double q);

struct SupportEstimate {
  std::vector<AtomRef> atoms;
  std::vector<std::size_t> flat;     // indices into the stacked weight vector
  std::vector<double> thresholds;    // per kernel
  std::vector<double> weights;       // weights of the kept atoms
  Dictionary effective;
};

/// Per-kernel threshold y_MIN c^{-1} sqrt(8 pi^3 sigma_xy^4 sigma_z^2), with
/// y_MIN the 99th percentile of Poisson(c beta). That expression is in rate
/// units; the weights here are integrated (already multiplied by c), so the
/// returned value is y_MIN / C_k: an atom is kept when its peak contribution
/// exceeds y_MIN photons.
std::vector<double> support_thresholds(const Dictionary& dictionary, double background_rate,
                                       double integration_volume);
SupportEstimate estimate_support(std::span<const double> weights, const Dictionary& dictionary,
                                 std::span<const double> thresholds);
SupportEstimate estimate_support(std::span<const double> weights, const Dictionary& dictionary,
                                 double background_rate, const CameraModel& camera);

}  // namespace psfmix
