#pragma once

// Trilinear 8-node hexahedron. Node ordering (natural coordinates):
//
//          7-----------6            zeta
//         /|          /|             |  eta
//        / |         / |             | /
//       4-----------5  |             |/
//       |  3--------|--2             o------ xi
//       | /         | /
//       |/          |/
//       0-----------1
//
// Bottom face 0-1-2-3 counterclockwise seen from +zeta, top face 4-5-6-7
// directly above. Every geometry and FEM routine uses this ordering.

#include <array>

#include <Eigen/Core>

#include "t2fe/types.hpp"

namespace t2fe::hex8 {

using Corners = std::array<Vec3, 8>;
using ShapeGrad = Eigen::Matrix<double, 8, 3>;

inline constexpr double kNodeXi[8][3] = {
    {-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
    {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1},
};

/// Quad faces, each ordered counterclockwise seen from outside.
inline constexpr int kFaces[6][4] = {
    {0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4}, {1, 2, 6, 5}, {2, 3, 7, 6}, {3, 0, 4, 7},
};

inline std::array<double, 8> shape(const Vec3& xi) {
  std::array<double, 8> n{};
  for (int a = 0; a < 8; ++a)
    n[a] = 0.125 * (1.0 + kNodeXi[a][0] * xi[0]) * (1.0 + kNodeXi[a][1] * xi[1]) *
           (1.0 + kNodeXi[a][2] * xi[2]);
  return n;
}

/// dN_a / dxi_j.
inline ShapeGrad shape_grad(const Vec3& xi) {
  ShapeGrad g;
  for (int a = 0; a < 8; ++a) {
    const double sx = kNodeXi[a][0], sy = kNodeXi[a][1], sz = kNodeXi[a][2];
    g(a, 0) = 0.125 * sx * (1.0 + sy * xi[1]) * (1.0 + sz * xi[2]);
    g(a, 1) = 0.125 * sy * (1.0 + sx * xi[0]) * (1.0 + sz * xi[2]);
    g(a, 2) = 0.125 * sz * (1.0 + sx * xi[0]) * (1.0 + sy * xi[1]);
  }
  return g;
}

/// J_ij = dx_i / dxi_j.
inline Mat3 jacobian(const Corners& x, const ShapeGrad& g) {
  Mat3 j = Mat3::Zero();
  for (int a = 0; a < 8; ++a) j += x[a] * g.row(a);
  return j;
}

/// 2x2x2 Gauss-Legendre points (weights are all 1).
inline const std::array<Vec3, 8>& gauss_points() {
  static const std::array<Vec3, 8> pts = [] {
    const double g = 0.57735026918962576451;  // 1/sqrt(3)
    std::array<Vec3, 8> p;
    for (int a = 0; a < 8; ++a) p[a] = Vec3(kNodeXi[a][0] * g, kNodeXi[a][1] * g, kNodeXi[a][2] * g);
    return p;
  }();
  return pts;
}

}  // namespace t2fe::hex8
