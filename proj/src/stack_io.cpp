#include "psfmix/stack_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <limits>

#include "psfmix/errors.hpp"

namespace psfmix {
namespace {

using nlohmann::json;

template <typename T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }
}

std::filesystem::path payload_path(const std::filesystem::path& header_path) {
  auto p = header_path;
  p.replace_extension(".raw");
  return p;
}

template <typename T>
void write_payload(std::ofstream& out, const std::vector<double>& values) {
  for (double v : values) {
    T t;
    if constexpr (std::is_integral_v<T>) {
      if (v < 0.0 || v > static_cast<double>(std::numeric_limits<T>::max()) || v != std::round(v))
        throw ValidationError("grey value " + std::to_string(v) + " not representable as uint16");
      t = static_cast<T>(v);
    } else {
      t = static_cast<T>(v);
    }
    t = to_little_endian(t);
    out.write(reinterpret_cast<const char*>(&t), sizeof(T));
  }
}

template <typename T>
std::vector<double> read_payload(std::ifstream& in, std::size_t n) {
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    T t;
    if (!in.read(reinterpret_cast<char*>(&t), sizeof(T)))
      throw ValidationError("stack payload truncated");
    values[i] = static_cast<double>(to_little_endian(t));
  }
  return values;
}

}  // namespace

void write_stack(const std::filesystem::path& header_path, const ImageStack& stack) {
  const auto& g = stack.geometry;
  const bool grey = stack.kind == StackKind::GreyValues;
  const auto raw = payload_path(header_path);
  json header = {
      {"kind", to_string(stack.kind)},
      {"n_slices", g.n_slices()},
      {"n_rows", g.n_rows()},
      {"n_cols", g.n_cols()},
      {"lateral_sampling_nm", g.lateral_sampling_nm()},
      {"axial_sampling_nm", g.axial_sampling_nm()},
      {"origin_um", {g.origin().x, g.origin().y, g.origin().z}},
      {"dtype", grey ? "uint16" : "float64"},
      {"payload", raw.filename().string()},
  };
  {
    std::ofstream out(header_path);
    if (!out) throw ValidationError("cannot write " + header_path.string());
    out << std::setw(2) << header << '\n';
  }
  std::ofstream out(raw, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + raw.string());
  if (grey)
    write_payload<std::uint16_t>(out, stack.values);
  else
    write_payload<double>(out, stack.values);
}

ImageStack read_stack(const std::filesystem::path& header_path) {
  std::ifstream hin(header_path);
  if (!hin) throw ValidationError("cannot open stack header " + header_path.string());
  json header;
  try {
    hin >> header;
    const auto origin = header.at("origin_um").get<std::vector<double>>();
    if (origin.size() != 3) throw ValidationError("origin_um must have 3 entries");
    GridGeometry g(header.at("n_slices").get<std::size_t>(), header.at("n_rows").get<std::size_t>(),
                   header.at("n_cols").get<std::size_t>(),
                   header.at("lateral_sampling_nm").get<double>(),
                   header.at("axial_sampling_nm").get<double>(), {origin[0], origin[1], origin[2]});
    const StackKind kind = stack_kind_from_string(header.at("kind").get<std::string>());
    const std::string dtype = header.at("dtype").get<std::string>();
    auto raw = header_path.parent_path() /
               header.value("payload", payload_path(header_path).filename().string());
    std::ifstream in(raw, std::ios::binary);
    if (!in) throw ValidationError("cannot open stack payload " + raw.string());
    std::vector<double> values;
    if (dtype == "uint16")
      values = read_payload<std::uint16_t>(in, g.size());
    else if (dtype == "float64")
      values = read_payload<double>(in, g.size());
    else
      throw ValidationError("unsupported stack dtype '" + dtype + "'");
    return ImageStack(g, std::move(values), kind);
  } catch (const json::exception& e) {
    throw ValidationError("malformed stack header " + header_path.string() + ": " + e.what());
  }
}

void write_stack_csv(const std::filesystem::path& path, const ImageStack& stack) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << "j,s,r,c,value\n" << std::setprecision(17);
  for (std::size_t j = 0; j < stack.size(); ++j) {
    const auto p = stack.geometry.decode(j);
    out << j << ',' << p.slice << ',' << p.row << ',' << p.col << ',' << stack.values[j] << '\n';
  }
}

}  // namespace psfmix
