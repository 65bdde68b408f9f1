#include "psfmix/dictionary.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "json_util.hpp"
#include "psfmix/errors.hpp"

namespace psfmix {

using detail::json;

std::size_t Dictionary::size() const {
  std::size_t n = 0;
  for (const auto& k : kernels) n += k.size();
  return n;
}

std::size_t Dictionary::offset(std::size_t k) const {
  if (k > kernels.size()) throw std::out_of_range("kernel index");
  std::size_t n = 0;
  for (std::size_t i = 0; i < k; ++i) n += kernels[i].size();
  return n;
}

void Dictionary::validate() const {
  for (const auto& k : kernels) {
    k.params.validate();
    if (placement == Placement::Digital) {
      if (!geometry) throw ValidationError("digital dictionary without geometry");
      if (k.pixel_indices.size() != k.positions.size())
        throw ValidationError("digital dictionary: pixel index list out of sync");
      for (std::size_t i : k.pixel_indices)
        if (i >= geometry->size()) throw ValidationError("digital dictionary: pixel out of range");
    }
  }
}

Dictionary build_digital_dictionary(const GridGeometry& geometry,
                                    std::span<const SingleGaussianParams> scales) {
  if (scales.empty()) throw ValidationError("dictionary needs at least one scale");
  const std::size_t n = geometry.size();
  if (n > kMaxDictionaryAtoms / scales.size())
    throw ValidationError("dictionary would exceed " + std::to_string(kMaxDictionaryAtoms) +
                          " atoms");
  Dictionary d;
  d.placement = Placement::Digital;
  d.geometry = geometry;
  std::vector<Vec3> centres(n);
  std::vector<std::size_t> indices(n);
  for (std::size_t j = 0; j < n; ++j) centres[j] = pixel_center(geometry, j);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  for (const auto& s : scales) {
    s.validate();
    d.kernels.push_back({s, centres, indices});
  }
  return d;
}

Dictionary restrict_dictionary(const Dictionary& dictionary, std::span<const AtomRef> atoms) {
  Dictionary out;
  out.placement = dictionary.placement;
  out.geometry = dictionary.geometry;
  out.kernels.resize(dictionary.kernels.size());
  for (std::size_t k = 0; k < dictionary.kernels.size(); ++k)
    out.kernels[k].params = dictionary.kernels[k].params;
  for (const auto& a : atoms) {
    if (a.kernel >= dictionary.kernels.size() || a.atom >= dictionary.kernels[a.kernel].size())
      throw ValidationError("restrict_dictionary: atom out of range");
    const auto& src = dictionary.kernels[a.kernel];
    auto& dst = out.kernels[a.kernel];
    dst.positions.push_back(src.positions[a.atom]);
    if (!src.pixel_indices.empty()) dst.pixel_indices.push_back(src.pixel_indices[a.atom]);
  }
  return out;
}

void GaussianMixtureModel::validate() const {
  dictionary.validate();
  if (weights.size() != dictionary.size())
    throw ValidationError("mixture: weight count differs from dictionary size");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("mixture: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12 * std::max<double>(1.0, static_cast<double>(weights.size())))
    throw ValidationError("mixture: weights are not on the simplex");
}

std::vector<AtomRef> GaussianMixtureModel::support() const {
  std::vector<AtomRef> s;
  std::size_t flat = 0;
  for (std::size_t k = 0; k < dictionary.kernels.size(); ++k)
    for (std::size_t m = 0; m < dictionary.kernels[k].size(); ++m, ++flat)
      if (weights[flat] > 0.0) s.push_back({k, m});
  return s;
}

std::vector<std::size_t> GaussianMixtureModel::support_indices() const {
  std::vector<std::size_t> s;
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (weights[i] > 0.0) s.push_back(i);
  return s;
}

GaussianMixtureModel make_mixture(Dictionary dictionary, std::span<const double> weights,
                                  Vec3 centre) {
  if (weights.size() != dictionary.size())
    throw ValidationError("mixture: weight count differs from dictionary size");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ValidationError("mixture: negative weight");
    sum += w;
  }
  if (!(sum > 0.0)) throw NumericalError("mixture: all weights are zero");
  GaussianMixtureModel m{std::move(dictionary), {}, centre};
  m.weights.reserve(weights.size());
  for (double w : weights) m.weights.push_back(w / sum);
  return m;
}

double eval_gm(const GaussianMixtureModel& model, Vec3 x) {
  double acc = 0.0;
  std::size_t flat = 0;
  for (const auto& k : model.dictionary.kernels) {
    for (std::size_t m = 0; m < k.size(); ++m, ++flat) {
      const double w = model.weights[flat];
      if (w > 0.0) acc += w * eval_sg(k.params, x - (k.positions[m] - model.centre));
    }
  }
  return acc;
}

namespace {

json scales_to_json(const Dictionary& d) {
  json list = json::array();
  for (const auto& k : d.kernels) {
    json e = {{"sigma_xy_nm", k.params.sigma_xy_nm},
              {"sigma_z_nm", k.params.sigma_z_nm},
              {"placement", d.placement == Placement::Digital ? "digital" : "analog"}};
    if (d.placement == Placement::Analog) {
      json pos = json::array();
      for (const auto& p : k.positions) pos.push_back(detail::vec3_to_json(p));
      e["positions_um"] = pos;
    }
    list.push_back(e);
  }
  return list;
}

SingleGaussianParams scale_from_json(const json& e) {
  SingleGaussianParams p{e.at("sigma_xy_nm").get<double>(), e.at("sigma_z_nm").get<double>()};
  p.validate();
  return p;
}

}  // namespace

std::vector<SingleGaussianParams> read_dictionary_spec(const std::filesystem::path& path) {
  const json j = detail::read_json_file(path);
  try {
    const json& list = j.is_object() ? j.at("kernels") : j;
    std::vector<SingleGaussianParams> out;
    for (const auto& e : list) {
      if (e.value("placement", std::string("digital")) != "digital")
        throw ValidationError("dictionary spec: only digital placement can be built from a spec");
      out.push_back(scale_from_json(e));
    }
    if (out.empty()) throw ValidationError("dictionary spec lists no kernels");
    return out;
  } catch (const json::exception& e) {
    throw ValidationError("malformed dictionary spec " + path.string() + ": " + e.what());
  }
}

void write_dictionary_spec(const std::filesystem::path& path,
                           std::span<const SingleGaussianParams> scales) {
  json list = json::array();
  for (const auto& s : scales)
    list.push_back(
        {{"sigma_xy_nm", s.sigma_xy_nm}, {"sigma_z_nm", s.sigma_z_nm}, {"placement", "digital"}});
  detail::write_json_file(path, list);
}

void write_mixture(const std::filesystem::path& header, const GaussianMixtureModel& model) {
  auto raw = header;
  raw.replace_extension(".weights.raw");
  json support = json::array();
  for (const auto& a : model.support()) support.push_back({a.kernel, a.atom});
  json h = {{"format", "psfmix-gm"},
            {"version", 1},
            {"kernels", scales_to_json(model.dictionary)},
            {"centre_um", detail::vec3_to_json(model.centre)},
            {"n_weights", model.weights.size()},
            {"dtype", "float64"},
            {"payload", raw.filename().string()},
            {"support", support}};
  if (model.dictionary.geometry) h["geometry"] = detail::geometry_to_json(*model.dictionary.geometry);
  detail::write_json_file(header, h);
  detail::write_float64(raw, model.weights);
}

GaussianMixtureModel read_mixture(const std::filesystem::path& header) {
  const json h = detail::read_json_file(header);
  try {
    Dictionary d;
    const auto& list = h.at("kernels");
    if (list.empty()) throw ValidationError("mixture file lists no kernels");
    const bool digital = list.front().value("placement", std::string("digital")) == "digital";
    if (digital) {
      std::vector<SingleGaussianParams> scales;
      for (const auto& e : list) scales.push_back(scale_from_json(e));
      d = build_digital_dictionary(detail::geometry_from_json(h.at("geometry")), scales);
    } else {
      d.placement = Placement::Analog;
      if (h.contains("geometry")) d.geometry = detail::geometry_from_json(h.at("geometry"));
      for (const auto& e : list) {
        DictionaryKernel k{scale_from_json(e), {}, {}};
        for (const auto& p : e.at("positions_um")) k.positions.push_back(detail::vec3_from_json(p));
        d.kernels.push_back(std::move(k));
      }
    }
    const std::size_t n = h.at("n_weights").get<std::size_t>();
    if (n != d.size()) throw ValidationError("mixture file: weight count differs from dictionary");
    GaussianMixtureModel m{std::move(d), {}, detail::vec3_from_json(h.at("centre_um"))};
    m.weights = detail::read_float64(header.parent_path() / h.at("payload").get<std::string>(), n);
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw ValidationError("malformed mixture file " + header.string() + ": " + e.what());
  }
}

}  // namespace psfmix
