#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "psfmix/errors.hpp"
#include "psfmix/imaging.hpp"

namespace psfmix::detail {

using nlohmann::json;

inline json geometry_to_json(const GridGeometry& g) {
  return {{"n_slices", g.n_slices()},
          {"n_rows", g.n_rows()},
          {"n_cols", g.n_cols()},
          {"lateral_sampling_nm", g.lateral_sampling_nm()},
          {"axial_sampling_nm", g.axial_sampling_nm()},
          {"origin_um", {g.origin().x, g.origin().y, g.origin().z}}};
}

inline Vec3 vec3_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ValidationError("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

inline json vec3_to_json(Vec3 v) { return json::array({v.x, v.y, v.z}); }

inline GridGeometry geometry_from_json(const json& j) {
  return GridGeometry(j.at("n_slices").get<std::size_t>(), j.at("n_rows").get<std::size_t>(),
                      j.at("n_cols").get<std::size_t>(), j.at("lateral_sampling_nm").get<double>(),
                      j.at("axial_sampling_nm").get<double>(),
                      j.contains("origin_um") ? vec3_from_json(j.at("origin_um")) : Vec3{});
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline void write_float64(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (double v : values) {
    if constexpr (std::endian::native == std::endian::big) {
      unsigned char b[8];
      std::memcpy(b, &v, 8);
      for (int i = 0; i < 4; ++i) std::swap(b[i], b[7 - i]);
      std::memcpy(&v, b, 8);
    }
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
}

inline std::vector<double> read_float64(const std::filesystem::path& path, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<double> values(n);
  for (auto& v : values) {
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
      throw ValidationError("payload truncated: " + path.string());
    if constexpr (std::endian::native == std::endian::big) {
      unsigned char b[8];
      std::memcpy(b, &v, 8);
      for (int i = 0; i < 4; ++i) std::swap(b[i], b[7 - i]);
      std::memcpy(&v, b, 8);
    }
  }
  return values;
}

}  // namespace psfmix::detail
