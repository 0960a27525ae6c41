#pragma once

#include <filesystem>
#include <optional>

#include "t2fe/raster.hpp"

namespace t2fe {

/// A volume on disk is a JSON header
///   {"dims": [nx, ny, nz], "spacing_mm": [...], "origin_mm": [...],
///    "direction": [9 floats, row-major], "unit": "ms" | "arbitrary-signal",
///    "echo_time_ms": optional}
/// next to a raw file with the same stem and a .raw extension holding
/// nx*ny*nz little-endian float32 values, x-fastest. Invalid voxels are
/// stored as quiet NaN.
struct VolumeFile {
  VoxelGrid grid;
  std::optional<double> echo_time_ms;
};

std::filesystem::path raw_path_for(const std::filesystem::path& header);

VolumeFile read_volume(const std::filesystem::path& header);
void write_volume(const std::filesystem::path& header, const VoxelGrid& grid,
                  std::optional<double> echo_time_ms = std::nullopt);

/// Loads every echo volume; echo times come from each header.
EchoSeries read_echo_series(const std::vector<std::filesystem::path>& headers);

}  // namespace t2fe
