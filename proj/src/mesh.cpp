#include "t2fe/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace t2fe {

std::string to_string(Part part) {
  switch (part) {
    case Part::femoral_cartilage: return "femoral-cartilage";
    case Part::tibial_cartilage: return "tibial-cartilage";
    case Part::meniscus: return "meniscus";
    case Part::other: return "other";
  }
  return "other";
}

Part part_from_string(const std::string& text) {
  if (text == "femoral-cartilage") return Part::femoral_cartilage;
  if (text == "tibial-cartilage") return Part::tibial_cartilage;
  if (text == "meniscus") return Part::meniscus;
  if (text == "other") return Part::other;
  throw InputError("unknown part label '" + text + "'");
}

hex8::Corners HexMesh::corners(std::size_t e) const {
  hex8::Corners c;
  for (int a = 0; a < 8; ++a) c[a] = nodes[static_cast<std::size_t>(elements[e][a])];
  return c;
}

void HexMesh::validate() const {
  if (parts.size() != elements.size())
    throw InputError("mesh has " + std::to_string(elements.size()) + " elements but " +
                     std::to_string(parts.size()) + " part labels");
  const int n = static_cast<int>(nodes.size());
  for (const Vec3& p : nodes)
    if (!p.allFinite()) throw InputError("mesh node coordinates must be finite");
  for (std::size_t e = 0; e < elements.size(); ++e) {
    std::array<int, 8> ids = elements[e];
    for (int id : ids)
      if (id < 0 || id >= n)
        throw InputError("element " + std::to_string(e) + " references missing node " +
                         std::to_string(id));
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw InputError("element " + std::to_string(e) + " is degenerate (repeated node)");
  }
  for (const auto& [name, ids] : node_sets)
    for (int id : ids)
      if (id < 0 || id >= n)
        throw InputError("node set '" + name + "' references missing node " + std::to_string(id));
}

void RigidTransform::validate() const {
  if (!rotation.allFinite() || !translation.allFinite())
    throw InputError("rigid transform must be finite");
  const double orth = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (orth > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw InputError("rigid transform rotation must be orthonormal with det = +1");
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

namespace {

void check_element_id(const HexMesh& mesh, std::size_t e) {
  if (e >= mesh.element_count())
    throw InputError("element id " + std::to_string(e) + " out of range");
}

}  // namespace

Vec3 element_centroid(const HexMesh& mesh, std::size_t e) {
  check_element_id(mesh, e);
  Vec3 sum = Vec3::Zero();
  for (int id : mesh.elements[e]) sum += mesh.nodes[static_cast<std::size_t>(id)];
  return sum / 8.0;
}

double hex_volume(const hex8::Corners& x) {
  double vol = 0.0;
  for (const Vec3& xi : hex8::gauss_points()) {
    const double det = hex8::jacobian(x, hex8::shape_grad(xi)).determinant();
    if (!(det > 0.0)) throw GeometryError("nonpositive Jacobian inside hexahedron");
    vol += det;
  }
  return vol;
}

double element_volume(const HexMesh& mesh, std::size_t e) {
  check_element_id(mesh, e);
  try {
    return hex_volume(mesh.corners(e));
  } catch (const GeometryError&) {
    throw GeometryError("element " + std::to_string(e) + " has a nonpositive Jacobian");
  }
}

std::array<double, 8> corner_jacobians(const hex8::Corners& x) {
  std::array<double, 8> out{};
  for (int a = 0; a < 8; ++a) {
    const Vec3 xi(hex8::kNodeXi[a][0], hex8::kNodeXi[a][1], hex8::kNodeXi[a][2]);
    out[a] = hex8::jacobian(x, hex8::shape_grad(xi)).determinant();
  }
  return out;
}

double min_scaled_jacobian(const hex8::Corners& x) {
  double worst = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 8; ++a) {
    const Vec3 xi(hex8::kNodeXi[a][0], hex8::kNodeXi[a][1], hex8::kNodeXi[a][2]);
    const Mat3 j = hex8::jacobian(x, hex8::shape_grad(xi));
    const double norms = j.col(0).norm() * j.col(1).norm() * j.col(2).norm();
    const double scaled = norms > 0.0 ? j.determinant() / norms : 0.0;
    worst = std::min(worst, scaled);
  }
  return worst;
}

std::vector<std::size_t> check_jacobians(const HexMesh& mesh) {
  std::vector<std::size_t> bad;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto dets = corner_jacobians(mesh.corners(e));
    if (std::any_of(dets.begin(), dets.end(), [](double d) { return !(d > 0.0); })) bad.push_back(e);
  }
  return bad;
}

VoxelGrid apply_pose(const VoxelGrid& grid, const RigidTransform& t) {
  t.validate();
  VoxelGrid out = grid;
  out.origin = t.apply(grid.origin);
  out.direction = t.rotation * grid.direction;
  return out;
}

HexMesh apply_pose(const HexMesh& mesh, const RigidTransform& t) {
  t.validate();
  HexMesh out = mesh;
  for (Vec3& p : out.nodes) p = t.apply(p);
  return out;
}

HexMesh structured_box_mesh(const Index3& n, const Vec3& lo, const Vec3& hi, Part part) {
  for (int a = 0; a < 3; ++a) {
    if (n[a] < 1) throw InputError("box mesh needs at least one element per axis");
    if (!(hi[a] > lo[a])) throw InputError("box mesh extent must be positive");
  }
  const std::int64_t px = n[0] + 1, py = n[1] + 1, pz = n[2] + 1;
  auto node_id = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    return static_cast<int>((k * py + j) * px + i);
  };
  HexMesh mesh;
  for (std::int64_t k = 0; k < pz; ++k)
    for (std::int64_t j = 0; j < py; ++j)
      for (std::int64_t i = 0; i < px; ++i) {
        const Vec3 t(static_cast<double>(i) / n[0], static_cast<double>(j) / n[1],
                     static_cast<double>(k) / n[2]);
        mesh.nodes.push_back(lo + (hi - lo).cwiseProduct(t));
        if (i == 0) mesh.node_sets["xmin"].push_back(node_id(i, j, k));
        if (i == n[0]) mesh.node_sets["xmax"].push_back(node_id(i, j, k));
        if (j == 0) mesh.node_sets["ymin"].push_back(node_id(i, j, k));
        if (j == n[1]) mesh.node_sets["ymax"].push_back(node_id(i, j, k));
        if (k == 0) mesh.node_sets["zmin"].push_back(node_id(i, j, k));
        if (k == n[2]) mesh.node_sets["zmax"].push_back(node_id(i, j, k));
      }
  for (std::int64_t k = 0; k < n[2]; ++k)
    for (std::int64_t j = 0; j < n[1]; ++j)
      for (std::int64_t i = 0; i < n[0]; ++i) {
        mesh.elements.push_back({node_id(i, j, k), node_id(i + 1, j, k), node_id(i + 1, j + 1, k),
                                 node_id(i, j + 1, k), node_id(i, j, k + 1), node_id(i + 1, j, k + 1),
                                 node_id(i + 1, j + 1, k + 1), node_id(i, j + 1, k + 1)});
        mesh.parts.push_back(part);
      }
  return mesh;
}

std::vector<std::vector<std::size_t>> face_neighbors(const HexMesh& mesh) {
  std::map<std::array<int, 4>, std::vector<std::size_t>> owners;
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    for (const auto& face : hex8::kFaces) {
      std::array<int, 4> key{};
      for (int k = 0; k < 4; ++k) key[k] = mesh.elements[e][face[k]];
      std::sort(key.begin(), key.end());
      owners[key].push_back(e);
    }
  }
  std::vector<std::vector<std::size_t>> nbrs(mesh.element_count());
  for (const auto& [key, elems] : owners)
    for (std::size_t a : elems)
      for (std::size_t b : elems)
        if (a != b) nbrs[a].push_back(b);
  for (auto& n : nbrs) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return nbrs;
}

}  // namespace t2fe
