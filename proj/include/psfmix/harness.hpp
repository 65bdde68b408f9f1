#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "psfmix/asb.hpp"
#include "psfmix/cmaes.hpp"
#include "psfmix/estimation.hpp"
#include "psfmix/forward.hpp"

namespace psfmix {

enum class Dataset { Synthetic1D, SBW, WFFM, LSCM, Custom };
const char* dataset_name(Dataset d);
Dataset dataset_from_string(const std::string& s);

/// Sampling, camera and optics of one acquisition-table row.
struct Acquisition {
  GridGeometry geometry;
  CameraModel camera;
  std::optional<BornWolfParams> optics;  // unset where n_i is not available
};

inline constexpr std::size_t kDeskScaleSide = 21;

/// desk_scale shrinks 3-D stacks to 21 x 21 x 21 at the same samplings.
Acquisition dataset_preset(Dataset d, bool desk_scale = true);

/// One dictionary: explicit scales, or the fitted SG kernel divided by each
/// divisor.
struct DictionarySpec {
  std::string name;
  std::vector<SingleGaussianParams> scales;
  std::vector<double> sg_divisors;

  std::vector<SingleGaussianParams> resolve(const SingleGaussianParams& sg_fit) const;
};

enum class BackgroundMode { Median, Known };

struct ThresholdSpec {
  bool poisson = true;  // y_min rule; otherwise `flat` for every kernel
  double flat = 0.1;
};

struct RobustnessSpec {
  std::size_t realizations = 50;
  std::string dictionary;       // name in ExperimentConfig::dictionaries
  std::vector<double> lambdas;  // one cell
  std::size_t bins = 10;
  std::size_t max_iters = 500;
};

/// A PSF used for localization. "bw" and "sgt" derive from the acquisition
/// optics. "sg" takes explicit widths or, without them, the SG fit of the
/// calibration stack. "gm" reads a model file or calibrates `dictionary` at
/// the `lambdas` cell on the calibration stack.
struct ModelSpec {
  std::string name;
  std::string type;  // bw | sg | sgt | gm
  std::optional<SingleGaussianParams> sg;
  std::filesystem::path file;
  std::string dictionary;
  std::vector<double> lambdas;
  bool anchor_truth = false;  // GM: centre on the scene source instead of the fit
};

struct LocalizationSpec {
  std::vector<double> psnr_db{10.0, 20.0};
  std::size_t n_stacks = 100;
  std::vector<ModelSpec> models;
  std::size_t max_evaluations = 3000;
  double margin_px = 0.0;  // positions drawn this far inside the pixel-centre box
};

struct ExperimentConfig {
  int version = 1;
  Dataset dataset = Dataset::Custom;
  Acquisition acquisition;
  Scene scene;                 // alpha and beta integrated
  double background_rate = 0;  // beta / c
  std::optional<std::filesystem::path> stack;
  BackgroundMode background = BackgroundMode::Median;
  std::vector<DictionarySpec> dictionaries;
  std::vector<std::vector<double>> lambdas;  // cells; a single value applies to every kernel
  ThresholdSpec threshold;
  SolverConfig solver;
  CmaEsConfig sg_fit;
  RobustnessSpec robustness;
  LocalizationSpec localization;
  std::filesystem::path base_dir;  // relative paths resolve against this

  void validate() const;
  const DictionarySpec& dictionary(const std::string& name) const;
};

inline constexpr int kConfigVersion = 1;

/// Versioned JSON config; unknown keys are rejected at every level.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);
/// Built-in defaults for a dataset (desk scale).
ExperimentConfig preset_config(Dataset d);

// Scene file: {source:{x_um,y_um,z_um,intensity}, background_rate, psf:{type,...}}.
// The intensity is integrated (photons); the background rate is multiplied
// by c. GM psfs reference a model file.
Scene read_scene(const std::filesystem::path& path, const Acquisition& acquisition,
                 double* background_rate = nullptr);
void write_scene(const std::filesystem::path& path, const Scene& scene, double background_rate);

/// Runs job(i) for i in [0, n) on at most `threads` workers (0: OpenMP
/// default). Results must be written by index.
void run_jobs(std::size_t n, int threads, const std::function<void(std::size_t)>& job);

// ---- calibration -----------------------------------------------------------

struct CalibrationCell {
  std::string dictionary;
  std::vector<double> lambdas;
  std::size_t solver_support = 0;  // nonzero weights returned by the solver
  std::size_t support = 0;         // after thresholding
  std::size_t support_debiased = 0;
  double deviance_solver = 0.0;
  double deviance_thresholded = 0.0;  // biased weights on the support
  double deviance_debiased = 0.0;
  double ps_intensity = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double seconds = 0.0;
  std::string status = "ok";  // ok | empty-support | degenerate | error: ...
  std::optional<GaussianMixtureModel> model;
  std::vector<std::size_t> kernel_support;  // per kernel, after debiasing
};

struct CalibrationReport {
  double background_rate = 0.0;
  double background = 0.0;
  SgFit sg;
  std::vector<CalibrationCell> cells;
};

struct CalibrationOptions {
  SolverConfig solver;
  ThresholdSpec threshold;
  int threads = 1;
};

/// Background, then SG fit for the source position.
CalibrationReport prepare_calibration(const ImageStack& photons, const CameraModel& camera,
                                      BackgroundMode mode, double known_background_rate,
                                      const CmaEsConfig& sg_fit);

/// Solve, threshold and debias for every lambda cell on one dictionary. A
/// failing cell is reported and the others are kept.
std::vector<CalibrationCell> calibrate_dictionary(const ImageStack& photons,
                                                  const CameraModel& camera,
                                                  const CalibrationReport& prep,
                                                  const DictionarySpec& spec,
                                                  const std::vector<std::vector<double>>& lambdas,
                                                  const CalibrationOptions& options);

// ---- robustness ------------------------------------------------------------

struct HistogramBin {
  double lower = 0.0, upper = 0.0;
  double mean = 0.0, variance = 0.0;
  std::optional<double> fano;  // undefined for empty bins
};

struct RobustnessReport {
  std::vector<std::size_t> support_sizes;
  std::vector<std::string> status;
  ImageStack mean, std;
  std::vector<HistogramBin> bins;
  double support_mean = 0.0, support_std = 0.0;
};

/// Weight histogram with common log-spaced bins over all realizations.
std::vector<HistogramBin> weight_histogram(const std::vector<std::vector<double>>& weights,
                                           std::size_t n_bins);

/// Mean photon projection with zero background: sum_k B_k(0) w_k at the
/// lab-frame atom positions.
std::vector<double> project_model(const GaussianMixtureModel& model, double intensity,
                                  const GridGeometry& geometry);

using Sampler = std::function<ImageStack(const ImageStack& mean, NoiseSeed seed)>;

RobustnessReport run_robustness(const ExperimentConfig& config, std::uint64_t seed, int threads,
                                const Sampler& sampler = sample_photons);

// ---- localization ----------------------------------------------------------

struct LocalizationRow {
  std::string model;
  double psnr_db = 0.0;
  std::size_t stack = 0;
  Vec3 truth, estimate;
  double position_error_nm = 0.0;
  double amplitude_true = 0.0, amplitude_est = 0.0;
  double intensity_error = 0.0;  // relative, central-mode units
  std::size_t evaluations = 0;
  double seconds = 0.0;
};

struct LocalizationSummary {
  std::string model;
  double psnr_db = 0.0;
  double median_position_error_nm = 0.0;
  double median_intensity_error = 0.0;
  std::size_t support = 0;
  double seconds_per_evaluation = 0.0;
};

struct LocalizationReport {
  std::vector<LocalizationRow> rows;
  std::vector<LocalizationSummary> summary;
};

struct NamedModel {
  std::string name;
  PsfModel psf;
};

/// Resolves model specs against the acquisition optics, model files and, when
/// needed, one calibration of the configured stack (drawn with `seed`).
std::vector<NamedModel> resolve_models(const ExperimentConfig& config, std::uint64_t seed,
                                       int threads);

/// Unit-rate point sources at uniform positions; exposure set per PSNR from
/// the Born-Wolf truth; every model localizes every stack.
LocalizationReport run_localization(const ExperimentConfig& config,
                                    const std::vector<NamedModel>& models, std::uint64_t seed,
                                    int threads);

// ---- command drivers (write under `out` with a manifest) -------------------

struct RunContext {
  std::filesystem::path out;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string command;
  std::filesystem::path config_path;
};

void write_manifest(const RunContext& ctx, const std::vector<std::string>& files,
                    const std::string& extra_json = "{}");

void cmd_simulate(const ExperimentConfig& config, const RunContext& ctx);
void cmd_calibrate(const ExperimentConfig& config, const RunContext& ctx);
void cmd_tradeoff(const ExperimentConfig& config, const RunContext& ctx);
void cmd_robustness(const ExperimentConfig& config, const RunContext& ctx);
void cmd_localize(const ExperimentConfig& config, const RunContext& ctx);
void cmd_estimate_background(const ExperimentConfig& config, const RunContext& ctx);

/// Photon counts of the configured input stack, or a simulation of the
/// configured scene with `seed`.
ImageStack input_photons(const ExperimentConfig& config, std::uint64_t seed);

}  // namespace psfmix
