#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "t2fe/hex8.hpp"
#include "t2fe/raster.hpp"
#include "t2fe/types.hpp"

namespace t2fe {

enum class Part { femoral_cartilage, tibial_cartilage, meniscus, other };

std::string to_string(Part part);
Part part_from_string(const std::string& text);
inline bool is_cartilage(Part p) {
  return p == Part::femoral_cartilage || p == Part::tibial_cartilage;
}

/// 8-node hexahedral mesh (see hex8.hpp for the node ordering). Node ids are
/// 0-based.
struct HexMesh {
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 8>> elements;
  std::vector<Part> parts;
  std::map<std::string, std::vector<int>> node_sets;

  std::size_t element_count() const { return elements.size(); }
  std::size_t node_count() const { return nodes.size(); }
  hex8::Corners corners(std::size_t e) const;

  /// Connectivity checks only; Jacobian positivity is reported by
  /// check_jacobians.
  void validate() const;
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const;
  RigidTransform inverse() const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

Vec3 element_centroid(const HexMesh& mesh, std::size_t e);

/// Volume of the trilinear map by 2x2x2 Gauss quadrature of det J (exact for
/// the trilinear hexahedron). Throws GeometryError on a nonpositive Jacobian
/// at any quadrature point.
double hex_volume(const hex8::Corners& x);
double element_volume(const HexMesh& mesh, std::size_t e);

/// det J evaluated at each of the 8 corners, in node order.
std::array<double, 8> corner_jacobians(const hex8::Corners& x);

/// Smallest corner Jacobian normalised by the lengths of the three edges
/// meeting at that corner; 1 for a perfect cube.
double min_scaled_jacobian(const hex8::Corners& x);

/// Ids of elements with any corner Jacobian <= 0.
std::vector<std::size_t> check_jacobians(const HexMesh& mesh);

/// Moves the grid pose; voxel values are never resampled.
VoxelGrid apply_pose(const VoxelGrid& grid, const RigidTransform& t);
HexMesh apply_pose(const HexMesh& mesh, const RigidTransform& t);

/// Regular n[0] x n[1] x n[2] hexahedral block of [lo, hi] with node sets
/// "xmin", "xmax", "ymin", "ymax", "zmin", "zmax". Elements are numbered
/// x-fastest, nodes likewise.
HexMesh structured_box_mesh(const Index3& n, const Vec3& lo, const Vec3& hi, Part part = Part::other);

/// For every element, the ids of elements sharing a full quad face.
std::vector<std::vector<std::size_t>> face_neighbors(const HexMesh& mesh);

}  // namespace t2fe
