#include "psfmix/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json_util.hpp"
#include "psfmix/errors.hpp"
#include "psfmix/likelihood.hpp"
#include "psfmix/stack_io.hpp"

namespace psfmix {

using detail::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

fs::path resolve_path(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

fs::path existing_file(const fs::path& base, const std::string& p, const std::string& what) {
  auto path = resolve_path(base, p);
  if (!fs::exists(path)) throw ValidationError(what + " not found: " + path.string());
  return path;
}

SingleGaussianParams sg_from_json(const json& j, const std::string& where) {
  check_keys(j, {"sigma_xy_nm", "sigma_z_nm", "placement"}, where);
  if (j.contains("placement") && j.at("placement").get<std::string>() != "digital")
    throw ValidationError(where + ": only digital placement is supported by the harness");
  SingleGaussianParams p{j.at("sigma_xy_nm").get<double>(), j.at("sigma_z_nm").get<double>()};
  p.validate();
  return p;
}

BornWolfParams optics_from_json(const json& j, const std::string& where) {
  check_keys(j, {"wavelength_nm", "numerical_aperture", "refractive_index"}, where);
  BornWolfParams p{j.at("wavelength_nm").get<double>(), j.at("numerical_aperture").get<double>(),
                   j.at("refractive_index").get<double>()};
  p.validate();
  return p;
}

CameraModel camera_from_json(const json& j, CameraModel cam) {
  check_keys(j, {"quantum_efficiency", "gain", "adu_factor", "bias", "exposure_ms", "pixel_area_um2"},
             "camera");
  cam.quantum_efficiency = get_or(j, "quantum_efficiency", cam.quantum_efficiency);
  cam.gain = get_or(j, "gain", cam.gain);
  cam.adu_factor = get_or(j, "adu_factor", cam.adu_factor);
  cam.bias = get_or(j, "bias", cam.bias);
  cam.exposure_ms = get_or(j, "exposure_ms", cam.exposure_ms);
  cam.pixel_area_um2 = get_or(j, "pixel_area_um2", cam.pixel_area_um2);
  cam.validate();
  return cam;
}

std::vector<double> lambda_cell(const json& j) {
  if (j.is_number()) return {j.get<double>()};
  if (j.is_array()) return j.get<std::vector<double>>();
  throw ValidationError("lambdas: each cell is a number or a list of numbers");
}

std::string format_lambdas(const std::vector<double>& l) {
  std::ostringstream os;
  os << std::setprecision(10);
  for (std::size_t i = 0; i < l.size(); ++i) os << (i ? ";" : "") << l[i];
  return os.str();
}

std::vector<double> expand_lambdas(const std::vector<double>& cell, std::size_t n_kernels) {
  if (cell.size() == n_kernels) return cell;
  if (cell.size() == 1) return std::vector<double>(n_kernels, cell[0]);
  throw ValidationError("lambda cell has " + std::to_string(cell.size()) + " entries for " +
                        std::to_string(n_kernels) + " kernels");
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return median(v);
}

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << std::setprecision(12);
  return out;
}

}  // namespace

// ---- datasets ---------------------------------------------------------------

const char* dataset_name(Dataset d) {
  switch (d) {
    case Dataset::Synthetic1D: return "synthetic-1d";
    case Dataset::SBW: return "sbw";
    case Dataset::WFFM: return "wffm";
    case Dataset::LSCM: return "lscm";
    default: return "custom";
  }
}

Dataset dataset_from_string(const std::string& s) {
  for (Dataset d : {Dataset::Synthetic1D, Dataset::SBW, Dataset::WFFM, Dataset::LSCM, Dataset::Custom})
    if (s == dataset_name(d)) return d;
  throw ValidationError("unknown dataset '" + s + "'");
}

Acquisition dataset_preset(Dataset d, bool desk) {
  const auto side = [&](std::size_t full) { return desk ? kDeskScaleSide : full; };
  Acquisition a;
  switch (d) {
    case Dataset::Synthetic1D:
      // One row of 101 pixels; the axial sampling is unused with one slice.
      a.geometry = GridGeometry(1, 1, 101, 50.0, 50.0);
      a.camera = make_camera(1.0, 1.0, 1.0, 0.0, 1.0, a.geometry);
      a.optics = BornWolfParams{474.0, 1.45, 1.518};
      break;
    case Dataset::SBW:
      a.geometry = GridGeometry(side(101), side(81), side(81), 65.0, 200.0);
      a.camera = make_camera(0.81, 1.0, 2.0, 100.0, 21.0, a.geometry);
      a.optics = BornWolfParams{474.0, 1.45, 1.518};
      break;
    case Dataset::WFFM:
      a.geometry = GridGeometry(side(31), side(81), side(81), 65.0, 200.0);
      a.camera = make_camera(0.81, 1.0, 2.14, 98.24, 21.0, a.geometry);
      break;
    case Dataset::LSCM:
      a.geometry = GridGeometry(side(101), side(61), side(61), 133.0, 50.0);
      a.camera = make_camera(0.70, 200.0, 6.44, 398.06, 12.0, a.geometry);
      break;
    case Dataset::Custom:
      a.geometry = GridGeometry(1, 1, 1, 1.0, 1.0);
      a.camera = make_camera(1.0, 1.0, 1.0, 0.0, 1.0, a.geometry);
      break;
  }
  return a;
}

std::vector<SingleGaussianParams> DictionarySpec::resolve(const SingleGaussianParams& sg) const {
  std::vector<SingleGaussianParams> out = scales;
  for (double d : sg_divisors) {
    if (!(d > 0.0)) throw ValidationError("dictionary " + name + ": divisors must be > 0");
    out.push_back({sg.sigma_xy_nm / d, sg.sigma_z_nm / d});
  }
  if (out.empty()) throw ValidationError("dictionary " + name + " has no kernels");
  return out;
}

namespace {
Scene scene_from_json(const json& j, const Acquisition& acq, const fs::path& base,
                      double* background_rate);
}

// ---- configuration ----------------------------------------------------------

void ExperimentConfig::validate() const {
  if (version != kConfigVersion)
    throw ValidationError("config version " + std::to_string(version) + " is not supported");
  acquisition.camera.validate();
  for (const auto& cell : lambdas)
    for (double l : cell)
      if (!(l >= 0.0) || !std::isfinite(l)) throw ValidationError("lambdas must be finite and >= 0");
  std::set<std::string> names;
  for (const auto& d : dictionaries)
    if (!names.insert(d.name).second) throw ValidationError("duplicate dictionary name " + d.name);
  if (!robustness.dictionary.empty()) dictionary(robustness.dictionary);
  for (const auto& m : localization.models)
    if (m.type == "gm" && m.file.empty()) dictionary(m.dictionary);
  for (double p : localization.psnr_db)
    if (!std::isfinite(p)) throw ValidationError("psnr values must be finite");
}

const DictionarySpec& ExperimentConfig::dictionary(const std::string& name) const {
  for (const auto& d : dictionaries)
    if (d.name == name) return d;
  throw ValidationError("no dictionary named '" + name + "'");
}

ExperimentConfig preset_config(Dataset d) {
  ExperimentConfig c;
  c.dataset = d;
  c.acquisition = dataset_preset(d, true);
  c.sg_fit.seed = 1;
  const double vol = c.acquisition.camera.integration_volume();
  if (d == Dataset::Synthetic1D) {
    // High background: the lobes sit on beta = 3000 photons; see the notes.
    c.background_rate = 3000.0 / vol;
    c.scene = {{{2.5, 0.0, 1.5}, 200.0},
               c.background_rate * vol,
               make_born_wolf(*c.acquisition.optics, c.acquisition.geometry)};
    c.background = BackgroundMode::Known;
    c.dictionaries = {{"D1", {{100.0, 100.0}}, {}}};
    c.lambdas = {{0.01}, {0.04}, {0.07}};
    c.threshold = {false, 0.1};
    c.solver.max_iters = 20000;
    c.solver.rho = 1e6;
  } else if (d == Dataset::SBW) {
    c.background_rate = 10.0 / vol;
    c.scene = {{c.acquisition.geometry.centre(), 2000.0},
               c.background_rate * vol,
               make_born_wolf(*c.acquisition.optics, c.acquisition.geometry)};
    c.background = BackgroundMode::Known;
    for (int k = 1; k <= 4; ++k)
      c.dictionaries.push_back({"D" + std::to_string(k), {}, {static_cast<double>(k)}});
    c.lambdas = {{1e-4}, {1e-3}, {3e-3}, {6e-3}};
    c.robustness = {50, "D2", {1e-3}, 10, 500};
    c.localization.models = {{"BW", "bw", {}, {}, {}, {}, false},
                             {"SG", "sg", {}, {}, {}, {}, false},
                             {"SGT", "sgt", {}, {}, {}, {}, false},
                             {"GM-D2", "gm", {}, {}, "D2", {1e-3}, false},
                             {"GM-D3", "gm", {}, {}, "D3", {1e-3}, false}};
    c.localization.n_stacks = 50;
  }
  return c;
}

ExperimentConfig parse_config(const std::string& text, const fs::path& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  try {
    check_keys(j, {"version", "dataset", "desk_scale", "geometry", "camera", "optics", "scene",
                   "stack", "background", "dictionaries", "lambdas", "lambda_grid", "threshold",
                   "solver", "sg_fit", "robustness", "localization"},
               "config");
    if (!j.contains("version")) throw ValidationError("config: missing 'version'");
    const int version = j.at("version").get<int>();
    if (version != kConfigVersion)
      throw ValidationError("config version " + std::to_string(version) + " is not supported");
    const Dataset ds = dataset_from_string(get_or<std::string>(j, "dataset", "custom"));
    ExperimentConfig c = preset_config(ds);
    c.base_dir = base;
    if (!get_or(j, "desk_scale", true)) {
      c.acquisition = dataset_preset(ds, false);
      if (ds == Dataset::SBW || ds == Dataset::Synthetic1D) {
        c.scene.source.position = ds == Dataset::SBW ? c.acquisition.geometry.centre()
                                                     : c.scene.source.position;
        c.scene.psf = make_born_wolf(*c.acquisition.optics, c.acquisition.geometry);
      }
    }
    if (j.contains("geometry")) {
      check_keys(j["geometry"], {"n_slices", "n_rows", "n_cols", "lateral_sampling_nm",
                                 "axial_sampling_nm", "origin_um"},
                 "geometry");
      c.acquisition.geometry = detail::geometry_from_json(j["geometry"]);
      const auto& cam = c.acquisition.camera;
      c.acquisition.camera = make_camera(cam.quantum_efficiency, cam.gain, cam.adu_factor, cam.bias,
                                         cam.exposure_ms, c.acquisition.geometry);
    }
    if (j.contains("camera")) c.acquisition.camera = camera_from_json(j["camera"], c.acquisition.camera);
    if (j.contains("optics")) c.acquisition.optics = optics_from_json(j["optics"], "optics");
    if (j.contains("scene")) {
      const auto& s = j["scene"];
      if (s.is_string()) {
        c.scene = read_scene(existing_file(base, s.get<std::string>(), "scene file"), c.acquisition,
                             &c.background_rate);
      } else {
        c.scene = scene_from_json(s, c.acquisition, base, &c.background_rate);
      }
    } else if (j.contains("geometry") || j.contains("camera") || j.contains("optics")) {
      // Re-derive the preset scene on the overridden acquisition.
      const double vol = c.acquisition.camera.integration_volume();
      c.scene.background = c.background_rate * vol;
      if (c.acquisition.optics && std::holds_alternative<BornWolfPsf>(c.scene.psf))
        c.scene.psf = make_born_wolf(*c.acquisition.optics, c.acquisition.geometry);
    }
    if (j.contains("stack")) c.stack = existing_file(base, j["stack"].get<std::string>(), "stack");
    if (j.contains("background")) {
      const auto b = j["background"].get<std::string>();
      if (b == "median")
        c.background = BackgroundMode::Median;
      else if (b == "known")
        c.background = BackgroundMode::Known;
      else
        throw ValidationError("background must be 'median' or 'known'");
    }
    if (j.contains("dictionaries")) {
      c.dictionaries.clear();
      std::size_t i = 0;
      for (const auto& d : j["dictionaries"]) {
        check_keys(d, {"name", "scales", "sg_divisors"}, "dictionary");
        DictionarySpec spec;
        spec.name = get_or<std::string>(d, "name", "D" + std::to_string(++i));
        if (d.contains("scales"))
          for (const auto& s : d["scales"]) spec.scales.push_back(sg_from_json(s, "dictionary scale"));
        if (d.contains("sg_divisors")) spec.sg_divisors = d["sg_divisors"].get<std::vector<double>>();
        if (spec.scales.empty() && spec.sg_divisors.empty())
          throw ValidationError("dictionary " + spec.name + " has no kernels");
        c.dictionaries.push_back(std::move(spec));
      }
    }
    if (j.contains("lambdas") && j.contains("lambda_grid"))
      throw ValidationError("config: give either 'lambdas' or 'lambda_grid'");
    if (j.contains("lambdas")) {
      c.lambdas.clear();
      for (const auto& cell : j["lambdas"]) c.lambdas.push_back(lambda_cell(cell));
    }
    if (j.contains("lambda_grid")) {
      // Cartesian product of per-kernel lists, first kernel slowest.
      const auto axes = j["lambda_grid"].get<std::vector<std::vector<double>>>();
      c.lambdas = {{}};
      for (const auto& axis : axes) {
        std::vector<std::vector<double>> next;
        for (const auto& prefix : c.lambdas)
          for (double v : axis) {
            auto cell = prefix;
            cell.push_back(v);
            next.push_back(std::move(cell));
          }
        c.lambdas = std::move(next);
      }
      if (axes.empty()) c.lambdas.clear();
    }
    if (j.contains("threshold")) {
      const auto& t = j["threshold"];
      if (t.is_string() && t.get<std::string>() == "poisson")
        c.threshold = {true, 0.0};
      else if (t.is_number())
        c.threshold = {false, t.get<double>()};
      else
        throw ValidationError("threshold must be 'poisson' or a number");
    }
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      check_keys(s, {"max_iters", "rho", "tol_primal", "tol_obj", "obj_patience"}, "solver");
      c.solver.max_iters = get_or(s, "max_iters", c.solver.max_iters);
      if (s.contains("rho")) {
        if (s["rho"].is_null())
          c.solver.rho.reset();
        else
          c.solver.rho = s["rho"].get<double>();
      }
      c.solver.tol_primal = get_or(s, "tol_primal", c.solver.tol_primal);
      c.solver.tol_obj = get_or(s, "tol_obj", c.solver.tol_obj);
      c.solver.obj_patience = get_or(s, "obj_patience", c.solver.obj_patience);
    }
    if (j.contains("sg_fit")) {
      const auto& s = j["sg_fit"];
      check_keys(s, {"max_evaluations", "restarts", "population", "sigma0"}, "sg_fit");
      c.sg_fit.max_evaluations = get_or(s, "max_evaluations", c.sg_fit.max_evaluations);
      c.sg_fit.restarts = get_or(s, "restarts", c.sg_fit.restarts);
      c.sg_fit.population = get_or(s, "population", c.sg_fit.population);
      c.sg_fit.sigma0 = get_or(s, "sigma0", c.sg_fit.sigma0);
    }
    if (j.contains("robustness")) {
      const auto& r = j["robustness"];
      check_keys(r, {"realizations", "dictionary", "lambdas", "bins", "max_iters"}, "robustness");
      c.robustness.realizations = get_or(r, "realizations", c.robustness.realizations);
      c.robustness.dictionary = get_or(r, "dictionary", c.robustness.dictionary);
      if (r.contains("lambdas")) c.robustness.lambdas = lambda_cell(r["lambdas"]);
      c.robustness.bins = get_or(r, "bins", c.robustness.bins);
      c.robustness.max_iters = get_or(r, "max_iters", c.robustness.max_iters);
    }
    if (j.contains("localization")) {
      const auto& l = j["localization"];
      check_keys(l, {"psnr_db", "n_stacks", "models", "max_evaluations", "margin_px"}, "localization");
      if (l.contains("psnr_db")) c.localization.psnr_db = l["psnr_db"].get<std::vector<double>>();
      c.localization.n_stacks = get_or(l, "n_stacks", c.localization.n_stacks);
      c.localization.max_evaluations = get_or(l, "max_evaluations", c.localization.max_evaluations);
      c.localization.margin_px = get_or(l, "margin_px", c.localization.margin_px);
      if (l.contains("models")) {
        c.localization.models.clear();
        for (const auto& m : l["models"]) {
          check_keys(m, {"name", "type", "sigma_xy_nm", "sigma_z_nm", "file", "dictionary", "lambdas",
                         "anchor"},
                     "model");
          ModelSpec spec;
          spec.type = m.at("type").get<std::string>();
          if (spec.type != "bw" && spec.type != "sg" && spec.type != "sgt" && spec.type != "gm")
            throw ValidationError("model type must be bw, sg, sgt or gm");
          spec.name = get_or<std::string>(m, "name", spec.type);
          if (m.contains("sigma_xy_nm") || m.contains("sigma_z_nm"))
            spec.sg = SingleGaussianParams{m.at("sigma_xy_nm").get<double>(),
                                           m.at("sigma_z_nm").get<double>()};
          if (m.contains("file")) spec.file = existing_file(base, m["file"].get<std::string>(), "model file");
          spec.dictionary = get_or<std::string>(m, "dictionary", "");
          if (m.contains("lambdas")) spec.lambdas = lambda_cell(m["lambdas"]);
          const auto anchor = get_or<std::string>(m, "anchor", "estimated");
          if (anchor != "estimated" && anchor != "truth")
            throw ValidationError("model anchor must be 'estimated' or 'truth'");
          spec.anchor_truth = anchor == "truth";
          if (spec.type == "gm" && spec.file.empty() && spec.dictionary.empty())
            throw ValidationError("gm model " + spec.name + " needs a file or a dictionary");
          c.localization.models.push_back(std::move(spec));
        }
      }
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

// ---- scenes -----------------------------------------------------------------

namespace {

Scene scene_from_json(const json& j, const Acquisition& acq, const fs::path& base,
                      double* background_rate) {
  check_keys(j, {"source", "background_rate", "psf"}, "scene");
  const auto& s = j.at("source");
  check_keys(s, {"x_um", "y_um", "z_um", "intensity"}, "scene source");
  Scene scene;
  scene.source = {{s.at("x_um").get<double>(), s.at("y_um").get<double>(), s.at("z_um").get<double>()},
                  s.at("intensity").get<double>()};
  const double rate = j.at("background_rate").get<double>();
  scene.background = rate * acq.camera.integration_volume();
  if (background_rate) *background_rate = rate;
  const auto& p = j.at("psf");
  const auto type = p.at("type").get<std::string>();
  if (type == "bw") {
    check_keys(p, {"type", "wavelength_nm", "numerical_aperture", "refractive_index"}, "scene psf");
    json o = p;
    o.erase("type");
    scene.psf = make_born_wolf(optics_from_json(o, "scene psf"), acq.geometry);
  } else if (type == "sg") {
    check_keys(p, {"type", "sigma_xy_nm", "sigma_z_nm"}, "scene psf");
    json o = p;
    o.erase("type");
    scene.psf = sg_from_json(o, "scene psf");
  } else if (type == "gm") {
    check_keys(p, {"type", "model"}, "scene psf");
    scene.psf = read_mixture(existing_file(base, p.at("model").get<std::string>(), "GM model"));
  } else {
    throw ValidationError("scene psf type must be bw, sg or gm");
  }
  scene.validate();
  return scene;
}

}  // namespace

Scene read_scene(const fs::path& path, const Acquisition& acq, double* background_rate) {
  const json j = detail::read_json_file(path);
  try {
    return scene_from_json(j, acq, path.parent_path(), background_rate);
  } catch (const json::exception& e) {
    throw ValidationError("malformed scene " + path.string() + ": " + e.what());
  }
}

void write_scene(const fs::path& path, const Scene& scene, double background_rate) {
  json psf;
  if (const auto* bw = std::get_if<BornWolfPsf>(&scene.psf)) {
    psf = {{"type", "bw"},
           {"wavelength_nm", bw->params.wavelength_nm},
           {"numerical_aperture", bw->params.numerical_aperture},
           {"refractive_index", bw->params.refractive_index}};
  } else if (const auto* sg = std::get_if<SingleGaussianParams>(&scene.psf)) {
    psf = {{"type", "sg"}, {"sigma_xy_nm", sg->sigma_xy_nm}, {"sigma_z_nm", sg->sigma_z_nm}};
  } else {
    auto model = path;
    model.replace_filename(path.stem().string() + "_gm.json");
    write_mixture(model, std::get<GaussianMixtureModel>(scene.psf));
    psf = {{"type", "gm"}, {"model", model.filename().string()}};
  }
  const auto& x = scene.source.position;
  detail::write_json_file(path, {{"source",
                                  {{"x_um", x.x}, {"y_um", x.y}, {"z_um", x.z},
                                   {"intensity", scene.source.intensity}}},
                                 {"background_rate", background_rate},
                                 {"psf", psf}});
}

// ---- jobs -------------------------------------------------------------------

void run_jobs(std::size_t n, int threads, const std::function<void(std::size_t)>& job) {
  if (n == 0) return;
  const int workers = threads > 0 ? threads : omp_get_max_threads();
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  // Inner kernels run serially inside a job.
  const int levels = omp_get_max_active_levels();
  omp_set_max_active_levels(1);
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    try {
      job(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  omp_set_max_active_levels(levels);
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- calibration ------------------------------------------------------------

CalibrationReport prepare_calibration(const ImageStack& photons, const CameraModel& camera,
                                      BackgroundMode mode, double known_rate, const CmaEsConfig& fit) {
  CalibrationReport r;
  const double c = camera.integration_volume();
  r.background_rate = mode == BackgroundMode::Known ? known_rate : estimate_background(photons, camera);
  r.background = r.background_rate * c;
  r.sg = fit_blind_sg(photons.values, photons.geometry, r.background, fit);
  return r;
}

std::vector<CalibrationCell> calibrate_dictionary(const ImageStack& photons, const CameraModel& camera,
                                                  const CalibrationReport& prep,
                                                  const DictionarySpec& spec,
                                                  const std::vector<std::vector<double>>& lambdas,
                                                  const CalibrationOptions& options) {
  if (lambdas.empty()) throw ValidationError("calibrate: empty lambda grid");
  const auto& g = photons.geometry;
  const auto scales = spec.resolve(prep.sg.params);
  const Dictionary dict = build_digital_dictionary(g, scales);
  const std::vector<double> thresholds =
      options.threshold.poisson
          ? support_thresholds(dict, prep.background_rate, camera.integration_volume())
          : std::vector<double>(dict.kernels.size(), options.threshold.flat);
  std::vector<CalibrationCell> cells(lambdas.size());
  run_jobs(lambdas.size(), options.threads, [&](std::size_t i) {
    auto& cell = cells[i];
    cell.dictionary = spec.name;
    const auto t0 = Clock::now();
    try {
      cell.lambdas = expand_lambdas(lambdas[i], dict.kernels.size());
      SolverConfig cfg = options.solver;
      cfg.lambdas = cell.lambdas;
      const auto res = solve_calibration(photons.values, dict, g, prep.background, cfg);
      cell.iterations = res.iterations;
      cell.converged = res.converged;
      cell.deviance_solver = res.deviance;
      cell.solver_support = static_cast<std::size_t>(
          std::count_if(res.weights.begin(), res.weights.end(), [](double w) { return w > 0.0; }));
      const auto sup = estimate_support(res.weights, dict, thresholds);
      cell.support = sup.atoms.size();
      cell.kernel_support.assign(dict.kernels.size(), 0);
      if (sup.atoms.empty()) {
        cell.status = "empty-support";
      } else {
        const MixtureOperator op(sup.effective, g, {}, BlurMode::Reflexive);
        cell.deviance_thresholded = deviance(photons.values, mixture_mean(op, sup.weights, prep.background));
        const auto db = debias(photons.values, op, prep.background, sup.weights);
        cell.deviance_debiased = db.deviance_final;
        cell.ps_intensity = db.ps_intensity;
        if (db.degenerate) {
          cell.status = "degenerate";
        } else {
          std::vector<double> full(dict.size(), 0.0);
          for (std::size_t i = 0; i < sup.flat.size(); ++i) full[sup.flat[i]] = db.weights[i];
          auto model = make_mixture(dict, full, prep.sg.position);
          for (const auto& a : model.support()) ++cell.kernel_support[a.kernel];
          cell.support_debiased = model.support().size();
          cell.model = std::move(model);
        }
      }
    } catch (const std::exception& e) {
      cell.status = std::string("error: ") + e.what();
    }
    cell.seconds = seconds_since(t0);
  });
  return cells;
}

// ---- robustness -------------------------------------------------------------

std::vector<HistogramBin> weight_histogram(const std::vector<std::vector<double>>& weights,
                                           std::size_t n_bins) {
  if (n_bins == 0) throw ValidationError("histogram: need at least one bin");
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& w : weights)
    for (double v : w)
      if (v > 0.0) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  std::vector<HistogramBin> bins(n_bins);
  if (!(hi > 0.0)) return bins;
  if (hi == lo) hi = lo * (1.0 + 1e-12);
  const double l0 = std::log(lo), step = (std::log(hi) - l0) / static_cast<double>(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    bins[b].lower = std::exp(l0 + step * static_cast<double>(b));
    bins[b].upper = std::exp(l0 + step * static_cast<double>(b + 1));
  }
  bins.front().lower = lo;
  bins.back().upper = hi;
  const double reps = static_cast<double>(weights.size());
  std::vector<std::vector<double>> counts(n_bins, std::vector<double>(weights.size(), 0.0));
  for (std::size_t r = 0; r < weights.size(); ++r)
    for (double v : weights[r]) {
      if (!(v > 0.0)) continue;
      auto b = static_cast<std::size_t>((std::log(v) - l0) / step);
      counts[std::min(b, n_bins - 1)][r] += 1.0;
    }
  for (std::size_t b = 0; b < n_bins; ++b) {
    const auto& c = counts[b];
    const double mean = std::accumulate(c.begin(), c.end(), 0.0) / reps;
    double var = 0.0;
    for (double x : c) var += (x - mean) * (x - mean);
    var = reps > 1 ? var / (reps - 1.0) : 0.0;
    bins[b].mean = mean;
    bins[b].variance = var;
    if (mean > 0.0) bins[b].fano = var / mean;
  }
  return bins;
}

std::vector<double> project_model(const GaussianMixtureModel& model, double intensity,
                                  const GridGeometry& geometry) {
  std::vector<double> out(geometry.size());
  psf_on_grid(model, geometry, model.centre, intensity, out);
  return out;
}

ImageStack input_photons(const ExperimentConfig& config, std::uint64_t seed) {
  const auto& cam = config.acquisition.camera;
  if (config.stack) {
    const auto s = read_stack(*config.stack);
    if (s.kind == StackKind::MeanIntensity) throw ValidationError("input stack holds means, not data");
    return to_photon_counts(s, cam);
  }
  const auto sim = simulate_all(config.scene, config.acquisition.geometry, cam, {seed, 0});
  return to_photon_counts(sim.grey, cam);
}

RobustnessReport run_robustness(const ExperimentConfig& config, std::uint64_t seed, int threads,
                                const Sampler& sampler) {
  const auto& spec = config.robustness;
  if (spec.dictionary.empty()) throw ValidationError("robustness: no dictionary configured");
  if (spec.realizations == 0) throw ValidationError("robustness: need at least one realization");
  if (config.stack) throw ValidationError("robustness simulates its own stacks; remove 'stack'");
  const auto& g = config.acquisition.geometry;
  const auto& cam = config.acquisition.camera;

  // Dictionary and centre come from one reference stack and stay fixed.
  const auto reference = input_photons(config, seed);
  const auto prep = prepare_calibration(reference, cam, config.background, config.background_rate,
                                        config.sg_fit);
  const auto mean = mean_stack(config.scene, g);
  CalibrationOptions opt{config.solver, config.threshold, 1};
  opt.solver.max_iters = spec.max_iters;
  const std::vector<std::vector<double>> cell{spec.lambdas};

  RobustnessReport rep;
  const std::size_t n = spec.realizations;
  std::vector<std::vector<double>> projections(n), weights(n);
  rep.support_sizes.assign(n, 0);
  rep.status.assign(n, "ok");
  run_jobs(n, threads, [&](std::size_t r) {
    const auto grey = to_grey_values(sampler(mean, {seed, r + 1}), cam);
    const auto photons = to_photon_counts(grey, cam);
    CalibrationReport p = prep;
    if (config.background == BackgroundMode::Median) {
      p.background_rate = estimate_background(photons, cam);
      p.background = p.background_rate * cam.integration_volume();
    }
    const auto cells = calibrate_dictionary(photons, cam, p, config.dictionary(spec.dictionary), cell, opt);
    const auto& c = cells.front();
    rep.status[r] = c.status;
    if (c.model) {
      rep.support_sizes[r] = c.support_debiased;
      projections[r] = project_model(*c.model, c.ps_intensity, g);
      for (std::size_t i : c.model->support_indices()) weights[r].push_back(c.model->weights[i]);
    } else {
      projections[r].assign(g.size(), 0.0);
    }
  });

  std::vector<double> m(g.size(), 0.0), sd(g.size(), 0.0);
  for (const auto& p : projections)
    for (std::size_t j = 0; j < g.size(); ++j) m[j] += p[j] / static_cast<double>(n);
  for (const auto& p : projections)
    for (std::size_t j = 0; j < g.size(); ++j) sd[j] += (p[j] - m[j]) * (p[j] - m[j]);
  for (double& v : sd) v = n > 1 ? std::sqrt(v / static_cast<double>(n - 1)) : 0.0;
  rep.mean = ImageStack(g, std::move(m), StackKind::MeanIntensity);
  rep.std = ImageStack(g, std::move(sd), StackKind::MeanIntensity);
  rep.bins = weight_histogram(weights, spec.bins);
  double s1 = 0.0, s2 = 0.0;
  for (auto s : rep.support_sizes) s1 += static_cast<double>(s);
  rep.support_mean = s1 / static_cast<double>(n);
  for (auto s : rep.support_sizes) s2 += std::pow(static_cast<double>(s) - rep.support_mean, 2);
  rep.support_std = n > 1 ? std::sqrt(s2 / static_cast<double>(n - 1)) : 0.0;
  return rep;
}

// ---- localization -----------------------------------------------------------

std::vector<NamedModel> resolve_models(const ExperimentConfig& config, std::uint64_t seed, int threads) {
  const auto& g = config.acquisition.geometry;
  const auto& specs = config.localization.models;
  if (specs.empty()) throw ValidationError("localization: no models configured");
  const bool needs_fit = std::any_of(specs.begin(), specs.end(), [](const ModelSpec& m) {
    return (m.type == "sg" && !m.sg) || (m.type == "gm" && m.file.empty());
  });
  std::optional<CalibrationReport> prep;
  std::optional<ImageStack> photons;
  if (needs_fit) {
    photons = input_photons(config, seed);
    prep = prepare_calibration(*photons, config.acquisition.camera, config.background,
                               config.background_rate, config.sg_fit);
  }
  std::vector<NamedModel> out;
  for (const auto& m : specs) {
    if (m.type == "bw" || m.type == "sgt") {
      if (!config.acquisition.optics)
        throw ValidationError("model " + m.name + " needs optics (refractive index not available)");
      if (m.type == "bw")
        out.push_back({m.name, make_born_wolf(*config.acquisition.optics, g)});
      else
        out.push_back({m.name, theoretical_sg(*config.acquisition.optics)});
    } else if (m.type == "sg") {
      out.push_back({m.name, m.sg ? *m.sg : prep->sg.params});
    } else {
      GaussianMixtureModel gm;
      if (!m.file.empty()) {
        gm = read_mixture(m.file);
      } else {
        CalibrationOptions opt{config.solver, config.threshold, threads};
        const auto cells = calibrate_dictionary(*photons, config.acquisition.camera, *prep,
                                                config.dictionary(m.dictionary), {m.lambdas}, opt);
        if (!cells.front().model)
          throw NumericalError("model " + m.name + ": calibration produced no mixture (" +
                               cells.front().status + ")");
        gm = *cells.front().model;
      }
      if (m.anchor_truth) gm.centre = config.scene.source.position;
      out.push_back({m.name, std::move(gm)});
    }
  }
  return out;
}

LocalizationReport run_localization(const ExperimentConfig& config, const std::vector<NamedModel>& models,
                                    std::uint64_t seed, int threads) {
  const auto& spec = config.localization;
  const auto& g = config.acquisition.geometry;
  if (!config.acquisition.optics) throw ValidationError("localization needs Born-Wolf optics");
  if (spec.n_stacks == 0 || spec.psnr_db.empty()) throw ValidationError("localization: nothing to do");
  const auto truth_psf = make_born_wolf(*config.acquisition.optics, g);
  const double truth_peak = truth_psf.normalization / 4.0;
  const double area = config.acquisition.camera.pixel_area_um2;

  std::vector<LocalizationModel> prepared;
  prepared.reserve(models.size());
  for (const auto& m : models) prepared.emplace_back(m.psf, g);

  auto box = position_box(g);
  const Vec3 margin{spec.margin_px * g.dxy_um(), spec.margin_px * g.dxy_um(), spec.margin_px * g.dz_um()};
  box.lower = box.lower + margin;
  box.upper = box.upper - margin;

  const std::size_t n_jobs = spec.psnr_db.size() * spec.n_stacks;
  std::vector<std::vector<LocalizationRow>> rows(n_jobs);
  run_jobs(n_jobs, threads, [&](std::size_t job) {
    const std::size_t pi = job / spec.n_stacks, si = job % spec.n_stacks;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(si), 0x10caU};
    std::mt19937_64 rng(seq);
    auto uniform = [&](double a, double b) {
      return a == b ? a : std::uniform_real_distribution<double>(a, b)(rng);
    };
    // The same positions are used at every PSNR.
    const Vec3 x0{uniform(box.lower.x, box.upper.x), uniform(box.lower.y, box.upper.y),
                  uniform(box.lower.z, box.upper.z)};
    const double psnr = spec.psnr_db[pi];
    const double t_e = exposure_for_psnr(truth_psf, x0, config.background_rate, g, area, psnr);
    const double c = area * t_e;
    const Scene scene{{x0, c}, c * config.background_rate, truth_psf};
    const auto photons = sample_photons(mean_stack(scene, g), {seed, 1000003ULL * (pi + 1) + si});
    const double amplitude = c * truth_peak;
    CmaEsConfig cfg;
    cfg.max_evaluations = spec.max_evaluations;
    cfg.restarts = 0;
    cfg.tol_x = 1e-8;
    cfg.tol_fun = 1e-10;
    cfg.seed = seed + job;
    for (std::size_t k = 0; k < models.size(); ++k) {
      const auto t0 = Clock::now();
      const auto fit = localize_ps(photons.values, prepared[k], g, scene.background, cfg);
      LocalizationRow row;
      row.model = models[k].name;
      row.psnr_db = psnr;
      row.stack = si;
      row.truth = x0;
      row.estimate = fit.position;
      row.position_error_nm = (fit.position - x0).norm() * 1e3;
      row.amplitude_true = amplitude;
      row.amplitude_est = fit.intensity;
      row.intensity_error = std::abs(fit.intensity - amplitude) / amplitude;
      row.evaluations = fit.evaluations;
      row.seconds = seconds_since(t0);
      rows[job].push_back(row);
    }
  });

  LocalizationReport rep;
  for (auto& r : rows)
    for (auto& x : r) rep.rows.push_back(x);
  for (double psnr : spec.psnr_db)
    for (std::size_t k = 0; k < models.size(); ++k) {
      std::vector<double> pos, inten;
      double secs = 0.0, evals = 0.0;
      for (const auto& r : rep.rows)
        if (r.model == models[k].name && r.psnr_db == psnr) {
          pos.push_back(r.position_error_nm);
          inten.push_back(r.intensity_error);
          secs += r.seconds;
          evals += static_cast<double>(r.evaluations);
        }
      rep.summary.push_back({models[k].name, psnr, median_of(pos), median_of(inten),
                             prepared[k].support_size(), evals > 0 ? secs / evals : 0.0});
    }
  return rep;
}

// ---- command drivers --------------------------------------------------------

namespace {

void ensure_out(const RunContext& ctx) {
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec) throw ValidationError("cannot create output directory " + ctx.out.string());
}

std::string write_stack_files(const RunContext& ctx, const std::string& stem, const ImageStack& s,
                              std::vector<std::string>& files) {
  const auto header = ctx.out / (stem + ".json");
  write_stack(header, s);
  files.push_back(stem + ".json");
  files.push_back(stem + ".raw");
  if (s.size() <= 10000) {
    write_stack_csv(ctx.out / (stem + ".csv"), s);
    files.push_back(stem + ".csv");
  }
  return header.string();
}

json sg_json(const CalibrationReport& r) {
  return {{"background_rate", r.background_rate},
          {"background", r.background},
          {"position_um", detail::vec3_to_json(r.sg.position)},
          {"intensity", r.sg.intensity},
          {"sigma_xy_nm", r.sg.params.sigma_xy_nm},
          {"sigma_z_nm", r.sg.params.sigma_z_nm},
          {"deviance", r.sg.deviance},
          {"evaluations", r.sg.evaluations}};
}

void write_calibration_csv(const fs::path& path, const std::vector<CalibrationCell>& cells,
                           const std::vector<std::string>& model_files) {
  auto out = open_csv(path);
  out << "dictionary,cell,lambdas,solver_support,support,support_debiased,deviance_solver,"
         "deviance_thresholded,deviance_debiased,ps_intensity,iterations,converged,seconds,status,model\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    out << c.dictionary << ',' << i << ',' << format_lambdas(c.lambdas) << ',' << c.solver_support << ','
        << c.support << ',' << c.support_debiased << ',' << c.deviance_solver << ','
        << c.deviance_thresholded << ',' << c.deviance_debiased << ',' << c.ps_intensity << ','
        << c.iterations << ',' << (c.converged ? 1 : 0) << ',' << c.seconds << ",\"" << c.status
        << "\"," << model_files[i] << '\n';
  }
}

struct DictionaryRun {
  const DictionarySpec* spec;
  std::vector<CalibrationCell> cells;
};

std::vector<DictionaryRun> calibrate_all(const ExperimentConfig& config, const ImageStack& photons,
                                         const CalibrationReport& prep, int threads) {
  if (config.dictionaries.empty()) throw ValidationError("calibrate: no dictionaries configured");
  if (config.lambdas.empty()) throw ValidationError("calibrate: empty lambda grid");
  CalibrationOptions opt{config.solver, config.threshold, threads};
  std::vector<DictionaryRun> runs;
  for (const auto& d : config.dictionaries)
    runs.push_back({&d, calibrate_dictionary(photons, config.acquisition.camera, prep, d, config.lambdas, opt)});
  return runs;
}

}  // namespace

void write_manifest(const RunContext& ctx, const std::vector<std::string>& files,
                    const std::string& extra_json) {
  json m = {{"tool", "psfmix"},
            {"manifest_version", 1},
            {"command", ctx.command},
            {"config", ctx.config_path.string()},
            {"seed", ctx.seed},
            {"threads", ctx.threads},
            {"files", files}};
  const auto extra = json::parse(extra_json);
  for (const auto& [k, v] : extra.items()) m[k] = v;
  detail::write_json_file(ctx.out / "manifest.json", m);
}

void cmd_simulate(const ExperimentConfig& config, const RunContext& ctx) {
  ensure_out(ctx);
  const auto& g = config.acquisition.geometry;
  const auto sim = simulate_all(config.scene, g, config.acquisition.camera, {ctx.seed, 0});
  std::vector<std::string> files;
  write_stack_files(ctx, "mean", sim.mean, files);
  write_stack_files(ctx, "photons", sim.photons, files);
  write_stack_files(ctx, "grey", sim.grey, files);
  write_scene(ctx.out / "scene.json", config.scene, config.background_rate);
  files.push_back("scene.json");
  const json extra = {{"dataset", dataset_name(config.dataset)},
                      {"empty_signal_pixels", empty_signal_pixels(sim.mean)}};
  write_manifest(ctx, files, extra.dump());
}

void cmd_estimate_background(const ExperimentConfig& config, const RunContext& ctx) {
  ensure_out(ctx);
  const auto photons = input_photons(config, ctx.seed);
  const auto& cam = config.acquisition.camera;
  const double rate = estimate_background(photons, cam);
  detail::write_json_file(ctx.out / "background.json",
                          {{"background_rate", rate},
                           {"background", rate * cam.integration_volume()},
                           {"integration_volume", cam.integration_volume()},
                           {"median_counts", median(photons.values)}});
  write_manifest(ctx, {"background.json"});
}

void cmd_calibrate(const ExperimentConfig& config, const RunContext& ctx) {
  ensure_out(ctx);
  const auto photons = input_photons(config, ctx.seed);
  const auto prep = prepare_calibration(photons, config.acquisition.camera, config.background,
                                        config.background_rate, config.sg_fit);
  std::vector<std::string> files{"sg_fit.json"};
  detail::write_json_file(ctx.out / "sg_fit.json", sg_json(prep));
  std::vector<CalibrationCell> all;
  std::vector<std::string> models;
  for (auto& run : calibrate_all(config, photons, prep, ctx.threads))
    for (std::size_t i = 0; i < run.cells.size(); ++i) {
      auto& c = run.cells[i];
      std::string file;
      if (c.model) {
        file = "model_" + run.spec->name + "_" + std::to_string(i) + ".json";
        write_mixture(ctx.out / file, *c.model);
        files.push_back(file);
        files.push_back(fs::path(file).replace_extension(".weights.raw").string());
      }
      models.push_back(file);
      all.push_back(std::move(c));
    }
  write_calibration_csv(ctx.out / "calibration.csv", all, models);
  files.push_back("calibration.csv");
  std::size_t failed = 0;
  for (const auto& c : all) failed += c.status.rfind("error", 0) == 0;
  const json extra = {{"dataset", dataset_name(config.dataset)}, {"failed_cells", failed}};
  write_manifest(ctx, files, extra.dump());
  if (failed == all.size()) throw NumericalError("calibrate: every lambda cell failed");
}

void cmd_tradeoff(const ExperimentConfig& config, const RunContext& ctx) {
  ensure_out(ctx);
  const auto photons = input_photons(config, ctx.seed);
  const auto& g = photons.geometry;
  const auto prep = prepare_calibration(photons, config.acquisition.camera, config.background,
                                        config.background_rate, config.sg_fit);
  detail::write_json_file(ctx.out / "sg_fit.json", sg_json(prep));
  const auto runs = calibrate_all(config, photons, prep, ctx.threads);
  auto out = open_csv(ctx.out / "tradeoff.csv");
  out << "dictionary,cell,lambdas,support,support_debiased,deviance_thresholded,deviance_debiased,status\n";
  out << "SG,0,,1,1," << prep.sg.deviance << ',' << prep.sg.deviance << ",ok\n";
  auto map = open_csv(ctx.out / "selection_map.csv");
  map << "dictionary,kernel,j,s,r,c,probability\n";
  for (const auto& run : runs) {
    std::vector<std::vector<double>> hits;
    for (std::size_t i = 0; i < run.cells.size(); ++i) {
      const auto& c = run.cells[i];
      out << run.spec->name << ',' << i << ',' << format_lambdas(c.lambdas) << ',' << c.support << ','
          << c.support_debiased << ',' << c.deviance_thresholded << ',' << c.deviance_debiased << ",\""
          << c.status << "\"\n";
      if (!c.model) continue;
      if (hits.empty()) hits.assign(c.model->dictionary.kernels.size(), std::vector<double>(g.size(), 0.0));
      for (const auto& a : c.model->support())
        hits[a.kernel][c.model->dictionary.kernels[a.kernel].pixel_indices[a.atom]] += 1.0;
    }
    for (std::size_t k = 0; k < hits.size(); ++k)
      for (std::size_t j = 0; j < g.size(); ++j)
        if (hits[k][j] > 0.0) {
          const auto p = g.decode(j);
          map << run.spec->name << ',' << k << ',' << j << ',' << p.slice << ',' << p.row << ',' << p.col
              << ',' << hits[k][j] / static_cast<double>(run.cells.size()) << '\n';
        }
  }
  write_manifest(ctx, {"sg_fit.json", "tradeoff.csv", "selection_map.csv"},
                 json{{"dataset", dataset_name(config.dataset)}}.dump());
}

void cmd_robustness(const ExperimentConfig& config, const RunContext& ctx) {
  ensure_out(ctx);
  const auto rep = run_robustness(config, ctx.seed, ctx.threads);
  std::vector<std::string> files;
  write_stack_files(ctx, "robustness_mean", rep.mean, files);
  write_stack_files(ctx, "robustness_std", rep.std, files);
  {
    auto out = open_csv(ctx.out / "robustness_support.csv");
    out << "realization,support,status\n";
    for (std::size_t r = 0; r < rep.support_sizes.size(); ++r)
      out << r << ',' << rep.support_sizes[r] << ",\"" << rep.status[r] << "\"\n";
  }
  {
    auto out = open_csv(ctx.out / "robustness_fano.csv");
    out << "bin,lower,upper,mean_count,variance,fano\n";
    for (std::size_t b = 0; b < rep.bins.size(); ++b) {
      const auto& x = rep.bins[b];
      out << b << ',' << x.lower << ',' << x.upper << ',' << x.mean << ',' << x.variance << ',';
      if (x.fano) out << *x.fano;
      out << '\n';
    }
  }
  files.insert(files.end(), {"robustness_support.csv", "robustness_fano.csv"});
  const json extra = {{"support_mean", rep.support_mean}, {"support_std", rep.support_std}};
  write_manifest(ctx, files, extra.dump());
}

void cmd_localize(const ExperimentConfig& config, const RunContext& ctx) {
  ensure_out(ctx);
  const auto models = resolve_models(config, ctx.seed, ctx.threads);
  const auto rep = run_localization(config, models, ctx.seed, ctx.threads);
  {
    auto out = open_csv(ctx.out / "localization.csv");
    out << "model,psnr_db,stack,x_um,y_um,z_um,x_hat_um,y_hat_um,z_hat_um,position_error_nm,"
           "amplitude_true,amplitude_est,intensity_error,evaluations,seconds\n";
    for (const auto& r : rep.rows)
      out << r.model << ',' << r.psnr_db << ',' << r.stack << ',' << r.truth.x << ',' << r.truth.y << ','
          << r.truth.z << ',' << r.estimate.x << ',' << r.estimate.y << ',' << r.estimate.z << ','
          << r.position_error_nm << ',' << r.amplitude_true << ',' << r.amplitude_est << ','
          << r.intensity_error << ',' << r.evaluations << ',' << r.seconds << '\n';
  }
  {
    auto out = open_csv(ctx.out / "localization_summary.csv");
    out << "model,psnr_db,median_position_error_nm,median_intensity_error,support,seconds_per_evaluation\n";
    for (const auto& s : rep.summary)
      out << s.model << ',' << s.psnr_db << ',' << s.median_position_error_nm << ','
          << s.median_intensity_error << ',' << s.support << ',' << s.seconds_per_evaluation << '\n';
  }
  write_manifest(ctx, {"localization.csv", "localization_summary.csv"});
}

}  // namespace psfmix
