#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "t2fe/clip.hpp"
#include "t2fe/mesh.hpp"
#include "t2fe/mesh_io.hpp"

using namespace t2fe;

namespace {

hex8::Corners unit_cube(double s = 1.0) {
  hex8::Corners c;
  for (int a = 0; a < 8; ++a)
    c[a] = s * Vec3((hex8::kNodeXi[a][0] + 1) / 2, (hex8::kNodeXi[a][1] + 1) / 2,
                    (hex8::kNodeXi[a][2] + 1) / 2);
  return c;
}

// Independent five-tetrahedron split (alternate diagonal family) to check the
// volume of planar-faced hexahedra.
double five_tet_volume(const hex8::Corners& x) {
  const int t[5][4] = {{0, 1, 3, 4}, {1, 2, 3, 6}, {1, 4, 5, 6}, {3, 4, 6, 7}, {1, 3, 4, 6}};
  double v = 0.0;
  for (const auto& q : t) v += (x[q[1]] - x[q[0]]).cross(x[q[2]] - x[q[0]]).dot(x[q[3]] - x[q[0]]) / 6.0;
  return v;
}

}  // namespace

TEST(Hex8, ShapeFunctionsPartitionUnity) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    const Vec3 xi(u(rng), u(rng), u(rng));
    double s = 0.0;
    for (double n : hex8::shape(xi)) s += n;
    EXPECT_NEAR(s, 1.0, 1e-15);
    EXPECT_NEAR(hex8::shape_grad(xi).colwise().sum().norm(), 0.0, 1e-15);
  }
}

TEST(MeshGeometry, CentroidAndVolumeOfParallelepiped) {
  hex8::Corners c = unit_cube();
  Mat3 a;
  a << 2, 0.3, 0.1, 0, 1.5, 0.2, 0, 0, 0.8;
  for (Vec3& p : c) p = a * p + Vec3(1, 2, 3);
  HexMesh m;
  m.nodes.assign(c.begin(), c.end());
  m.elements.push_back({0, 1, 2, 3, 4, 5, 6, 7});
  m.parts.push_back(Part::other);
  EXPECT_NEAR(element_volume(m, 0), a.determinant(), 1e-13);
  EXPECT_TRUE(element_centroid(m, 0).isApprox(a * Vec3(0.5, 0.5, 0.5) + Vec3(1, 2, 3), 1e-14));
  EXPECT_THROW(element_volume(m, 1), InputError);
}

TEST(MeshGeometry, VolumeMatchesTetDecompositionsForPlanarFaces) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-0.15, 0.15);
  for (int trial = 0; trial < 50; ++trial) {
    // Affine images of a cube have planar faces; a random affine map plus a
    // trapezoidal top face keeps faces planar as well.
    Mat3 a = Mat3::Identity();
    for (int i = 0; i < 9; ++i) a.data()[i] += u(rng);
    hex8::Corners c = unit_cube();
    const double taper = 1.0 + u(rng);
    for (int k = 4; k < 8; ++k) c[k].x() = 0.5 + (c[k].x() - 0.5) * taper;
    for (Vec3& p : c) p = a * p;
    EXPECT_NEAR(hex_volume(c), five_tet_volume(c), 1e-12);
    EXPECT_NEAR(clip::tet_decomposition_volume(c), five_tet_volume(c), 1e-12);
  }
}

TEST(MeshGeometry, JacobianChecks) {
  hex8::Corners c = unit_cube();
  EXPECT_NEAR(min_scaled_jacobian(c), 1.0, 1e-15);
  for (double d : corner_jacobians(c)) EXPECT_NEAR(d, 0.125, 1e-15);  // (1/2)^3 from [-1, 1]^3
  std::swap(c[6], c[7]);  // twisted top face
  EXPECT_LT(min_scaled_jacobian(c), 0.0);
  HexMesh m;
  m.nodes.assign(c.begin(), c.end());
  m.elements.push_back({0, 1, 2, 3, 4, 5, 6, 7});
  m.parts.push_back(Part::other);
  EXPECT_EQ(check_jacobians(m), std::vector<std::size_t>{0});
  EXPECT_THROW(element_volume(m, 0), GeometryError);
}

TEST(MeshGeometry, PoseRoundTrip) {
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  t.translation = Vec3(5, -2, 1);
  const HexMesh m = structured_box_mesh({2, 1, 1}, Vec3::Zero(), Vec3(2, 1, 1));
  const HexMesh back = apply_pose(apply_pose(m, t), t.inverse());
  for (std::size_t i = 0; i < m.node_count(); ++i) EXPECT_TRUE(back.nodes[i].isApprox(m.nodes[i], 1e-14));
  const HexMesh moved = apply_pose(m, t);
  EXPECT_NEAR(element_volume(moved, 1), 1.0, 1e-13);
  RigidTransform bad;
  bad.rotation(0, 0) = -1;
  EXPECT_THROW(bad.validate(), InputError);
}

TEST(MeshStructure, BoxMeshAndNeighbours) {
  const HexMesh m = structured_box_mesh({3, 2, 2}, Vec3::Zero(), Vec3(3, 2, 2), Part::tibial_cartilage);
  EXPECT_EQ(m.element_count(), 12u);
  EXPECT_EQ(m.node_count(), 36u);
  EXPECT_EQ(m.node_sets.at("zmin").size(), 12u);
  EXPECT_TRUE(check_jacobians(m).empty());
  const auto nb = face_neighbors(m);
  EXPECT_EQ(nb[0], (std::vector<std::size_t>{1, 3, 6}));
  EXPECT_EQ(nb[4].size(), 4u);
  EXPECT_NO_THROW(m.validate());
}

TEST(MeshIO, ListingParsesAndValidates) {
  std::istringstream in(R"(# two stacked cubes
node 0 0 0 0
node 1 1 0 0
node 2 1 1 0
node 3 0 1 0
node 4 0 0 1
node 5 1 0 1
node 6 1 1 1
node 7 0 1 1
node 8 0 0 2
node 9 1 0 2
node 10 1 1 2
node 11 0 1 2
hex 1 4 5 6 7 8 9 10 11 femoral-cartilage
hex 0 0 1 2 3 4 5 6 7 tibial-cartilage
set base 0 1 2 3
)");
  const HexMesh m = parse_mesh_listing(in);
  EXPECT_EQ(m.element_count(), 2u);
  EXPECT_EQ(m.parts[0], Part::tibial_cartilage);
  EXPECT_EQ(m.parts[1], Part::femoral_cartilage);
  EXPECT_EQ(m.node_sets.at("base").size(), 4u);
  EXPECT_NEAR(element_centroid(m, 1).z(), 1.5, 1e-15);

  std::istringstream missing("node 0 0 0 0\nhex 0 0 1 2 3 4 5 6 7\n");
  EXPECT_THROW(parse_mesh_listing(missing), InputError);
  std::istringstream junk("vertex 0 0 0 0\n");
  EXPECT_THROW(parse_mesh_listing(junk), InputError);
}

TEST(MeshIO, JsonRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "t2fe_mesh_io_test.json";
  const HexMesh m = structured_box_mesh({2, 2, 1}, Vec3(-1, -1, 0), Vec3(1, 1, 0.5), Part::meniscus);
  write_mesh(path, m);
  const HexMesh r = read_mesh(path);
  EXPECT_EQ(r.elements, m.elements);
  EXPECT_EQ(r.parts, m.parts);
  EXPECT_EQ(r.node_sets, m.node_sets);
  for (std::size_t i = 0; i < m.node_count(); ++i) EXPECT_EQ(r.nodes[i], m.nodes[i]);
  std::filesystem::remove(path);
  EXPECT_THROW(read_mesh(path), InputError);
}
