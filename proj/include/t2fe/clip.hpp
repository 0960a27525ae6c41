#pragma once

// Exact overlap volume between a hexahedron and an axis-aligned box.
//
// The hexahedron is split into six tetrahedra around the 0-6 diagonal
// (kHexTets). Each tetrahedron, a convex polyhedron, is clipped against the
// box's six half-spaces one plane at a time; the clipped piece's volume comes
// from the divergence theorem over its faces. For planar-faced hexahedra
// this is the exact overlap; for warped faces the tetrahedral split defines
// the cell geometry.

#include <array>

#include "t2fe/hex8.hpp"
#include "t2fe/types.hpp"

namespace t2fe::clip {

inline constexpr int kHexTets[6][4] = {
    {0, 1, 2, 6}, {0, 2, 3, 6}, {0, 3, 7, 6}, {0, 7, 4, 6}, {0, 4, 5, 6}, {0, 5, 1, 6},
};

inline constexpr int kMaxPolygonVertices = 12;
inline constexpr int kMaxFaces = 12;

struct Polygon {
  std::array<Vec3, kMaxPolygonVertices> v;
  int n = 0;
};

/// Faces ordered counterclockwise seen from outside.
struct ConvexPolyhedron {
  std::array<Polygon, kMaxFaces> faces;
  int nf = 0;

  /// Volume via the divergence theorem, evaluated relative to `ref` (pick a
  /// point near the body to limit cancellation).
  double volume(const Vec3& ref = Vec3::Zero()) const;
};

double signed_tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

/// Requires a positively oriented tetrahedron.
ConvexPolyhedron make_tetrahedron(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

enum class ClipResult { unchanged, empty, clipped };

/// Keeps the part with x[axis] <= value (keep_below) or x[axis] >= value.
/// `out` is written only for ClipResult::clipped.
ClipResult clip_axis(const ConvexPolyhedron& in, int axis, double value, bool keep_below,
                     ConvexPolyhedron& out);

/// Volume of a positively oriented tetrahedron inside the box [lo, hi].
double tet_box_overlap(const std::array<Vec3, 4>& tet, const Vec3& lo, const Vec3& hi);

/// Sum of the signed volumes of the six kHexTets tetrahedra.
double tet_decomposition_volume(const hex8::Corners& x);

/// Overlap of the hexahedron (six-tetrahedron geometry) with [lo, hi].
/// Throws GeometryError when any corner Jacobian is nonpositive.
double hex_box_overlap_volume(const hex8::Corners& x, const Vec3& lo, const Vec3& hi);

}  // namespace t2fe::clip
