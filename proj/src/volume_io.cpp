#include "t2fe/volume_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace t2fe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

Vec3 vec3_from(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
    throw InputError(std::string("volume header needs a 3-element '") + key + "'");
  return {j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>()};
}

}  // namespace

fs::path raw_path_for(const fs::path& header) {
  fs::path raw = header;
  raw.replace_extension(".raw");
  return raw;
}

VolumeFile read_volume(const fs::path& header) {
  std::ifstream in(header);
  if (!in) throw InputError("cannot open volume header " + header.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("malformed volume header " + header.string() + ": " + e.what());
  }

  VolumeFile vf;
  VoxelGrid& g = vf.grid;
  try {
    if (!j.contains("dims") || j["dims"].size() != 3)
      throw InputError("volume header needs 3-element 'dims'");
    for (int a = 0; a < 3; ++a) g.dims[a] = j["dims"][a].get<std::int64_t>();
    g.spacing = vec3_from(j, "spacing_mm");
    g.origin = vec3_from(j, "origin_mm");
    if (!j.contains("direction") || j["direction"].size() != 9)
      throw InputError("volume header needs 9-element 'direction'");
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) g.direction(r, c) = j["direction"][r * 3 + c].get<double>();
    g.unit = voxel_unit_from_string(j.value("unit", std::string("ms")));
    if (j.contains("echo_time_ms") && !j["echo_time_ms"].is_null())
      vf.echo_time_ms = j["echo_time_ms"].get<double>();
  } catch (const json::exception& e) {
    throw InputError("bad field in volume header " + header.string() + ": " + e.what());
  }
  for (int a = 0; a < 3; ++a)
    if (g.dims[a] <= 0) throw InputError("volume dims must be positive in " + header.string());

  const fs::path raw = raw_path_for(header);
  std::ifstream rin(raw, std::ios::binary);
  if (!rin) throw InputError("cannot open volume data " + raw.string());
  const std::size_t n = g.size();
  std::vector<std::uint32_t> words(n);
  rin.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(n * 4));
  if (rin.gcount() != static_cast<std::streamsize>(n * 4))
    throw InputError("volume data " + raw.string() + " is shorter than dims imply");
  g.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t w = words[i];
    if constexpr (std::endian::native == std::endian::big) w = byteswap32(w);
    g.values[i] = static_cast<double>(std::bit_cast<float>(w));
  }
  g.validate();
  return vf;
}

void write_volume(const fs::path& header, const VoxelGrid& grid, std::optional<double> echo_time_ms) {
  grid.validate();
  json j;
  j["dims"] = {grid.dims[0], grid.dims[1], grid.dims[2]};
  j["spacing_mm"] = {grid.spacing[0], grid.spacing[1], grid.spacing[2]};
  j["origin_mm"] = {grid.origin[0], grid.origin[1], grid.origin[2]};
  json dir = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) dir.push_back(grid.direction(r, c));
  j["direction"] = dir;
  j["unit"] = to_string(grid.unit);
  if (echo_time_ms) j["echo_time_ms"] = *echo_time_ms;

  std::ofstream out(header);
  if (!out) throw Error("cannot write volume header " + header.string());
  out << j.dump(2) << '\n';

  std::vector<std::uint32_t> words(grid.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    const double v = grid.values[i];
    const float f = is_valid_voxel(v) ? static_cast<float>(v) : std::numeric_limits<float>::quiet_NaN();
    std::uint32_t w = std::bit_cast<std::uint32_t>(f);
    if constexpr (std::endian::native == std::endian::big) w = byteswap32(w);
    words[i] = w;
  }
  const fs::path raw = raw_path_for(header);
  std::ofstream rout(raw, std::ios::binary);
  if (!rout) throw Error("cannot write volume data " + raw.string());
  rout.write(reinterpret_cast<const char*>(words.data()),
             static_cast<std::streamsize>(words.size() * 4));
}

EchoSeries read_echo_series(const std::vector<fs::path>& headers) {
  EchoSeries series;
  for (const auto& h : headers) {
    VolumeFile vf = read_volume(h);
    if (!vf.echo_time_ms) throw InputError("echo volume " + h.string() + " lacks echo_time_ms");
    series.echo_times_ms.push_back(*vf.echo_time_ms);
    series.grids.push_back(std::move(vf.grid));
  }
  return series;
}

}  // namespace t2fe
