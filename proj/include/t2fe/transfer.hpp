#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "t2fe/clip.hpp"
#include "t2fe/mesh.hpp"
#include "t2fe/raster.hpp"
#include "t2fe/simd/kernels.hpp"

namespace t2fe {

enum class FieldUnit { milliseconds, pascal, dimensionless };
enum class FieldMethod { nearest_neighbor, volume_weighted, derived };

std::string to_string(FieldUnit unit);
std::string to_string(FieldMethod method);
FieldMethod field_method_from_string(const std::string& text);

/// One scalar per element. `coverage` is the fraction of the element volume
/// overlapped by valid voxels (1/0 for a direct/fallback nearest-neighbour
/// hit). `warnings` counts elements that needed a fallback.
struct ElementField {
  std::vector<double> values;
  std::vector<double> coverage;
  FieldUnit unit = FieldUnit::milliseconds;
  FieldMethod method = FieldMethod::derived;
  std::size_t warnings = 0;

  std::size_t size() const { return values.size(); }
  /// Field of `values` with coverage 1.
  static ElementField derived_from(std::vector<double> values, FieldUnit unit);
  void validate(std::size_t element_count) const;
};

struct TransferOptions {
  /// Elements whose valid coverage falls below this fraction are assigned by
  /// nearest neighbour instead (counted in ElementField::warnings).
  double coverage_floor = 0.01;
  int jobs = 1;
};

/// Value of the voxel nearest to each element centroid. When the rounded
/// index is out of bounds or invalid, the nearest valid voxel centre
/// (Euclidean; ties to the lowest linear index) is used and a warning counted.
ElementField assign_nearest_neighbor(const HexMesh& mesh, const VoxelGrid& grid, int jobs = 1);

using clip::hex_box_overlap_volume;

struct VoxelOverlap {
  Index3 index;
  double volume;  // mm^3
};

/// Nonzero overlaps of a hexahedron (world coordinates) with the in-bounds
/// voxels of `grid`, in increasing linear voxel order. The hexahedron's
/// geometry is its six-tetrahedron decomposition, so the overlaps of an
/// element lying inside the grid sum to clip::tet_decomposition_volume.
std::vector<VoxelOverlap> element_overlaps(const hex8::Corners& corners, const VoxelGrid& grid,
                                           const simd::KernelTable& kernels = simd::active_kernels());

/// T2e = sum(T2 f) / sum(f) over valid voxels, f = overlap / element volume.
ElementField assign_volume_weighted(const HexMesh& mesh, const VoxelGrid& grid,
                                    const TransferOptions& options = {},
                                    const simd::KernelTable& kernels = simd::active_kernels());

struct TextureStats {
  double roughness = 0.0;  // mean |v_i - mean(neighbours)|
  double rms = 0.0;        // sqrt(mean (v_i - mean(neighbours))^2)
  std::size_t count = 0;   // elements that contributed
};

/// Neighbour-deviation statistics over elements whose part is in `parts`
/// (all parts when empty); neighbours are face-adjacent elements of the
/// selection.
TextureStats texture_stats(const HexMesh& mesh, const ElementField& field,
                           const std::vector<Part>& parts = {});

struct AgreementStats {
  double bias = 0.0;
  double sd = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
  /// Squared Pearson correlation (r^2 of the least-squares line); NaN when
  /// either field is constant.
  double r_squared = 0.0;
  std::size_t n = 0;
};

/// Bland-Altman statistics of d = a - b with sample SD.
AgreementStats agreement(const ElementField& a, const ElementField& b);

/// CSV with header element_id,value,coverage,method.
void write_element_field_csv(const std::filesystem::path& path, const ElementField& field);
ElementField read_element_field_csv(const std::filesystem::path& path,
                                    FieldUnit unit = FieldUnit::milliseconds);

}  // namespace t2fe
