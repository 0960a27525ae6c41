// Writes the bundled synthetic fixture: a two-layer cartilage slab, a noisy multi-echo series whose T2 follows a depth
// gradient, a rigid pose relating the scan frame to the model frame, the
// FE model and the pipeline config.
//
//   make_demo_fixture <output-dir>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <json.hpp>

#include "t2fe/mesh.hpp"
#include "t2fe/mesh_io.hpp"
#include "t2fe/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace t2fe;

namespace {

constexpr double kSlabX = 12.0, kSlabY = 12.0, kSlabZ = 3.0;  // mm
constexpr double kS0 = 1000.0;
constexpr double kNoiseSigma = 12.0;
const double kEchoTimes[] = {10.0, 20.0, 30.0, 40.0, 50.0, 60.0};

/// Ground-truth T2 (ms) in model coordinates: 55 ms at the bottom falling to
/// 35 ms at the top, with a gentle in-plane undulation.
double true_t2(const Vec3& p) {
  const double depth = 55.0 - 20.0 * (p.z() / kSlabZ);
  return depth + 3.0 * std::sin(p.x() * 0.7) * std::cos(p.y() * 0.5);
}

HexMesh demo_mesh() {
  HexMesh mesh = structured_box_mesh({12, 12, 6}, Vec3::Zero(), Vec3(kSlabX, kSlabY, kSlabZ));
  for (std::size_t e = 0; e < mesh.element_count(); ++e)
    mesh.parts[e] = e / 144 < 3 ? Part::tibial_cartilage : Part::femoral_cartilage;
  mesh.node_sets["bottom"] = mesh.node_sets.at("zmin");
  mesh.node_sets["top"] = mesh.node_sets.at("zmax");
  for (const char* s : {"xmin", "xmax", "ymin", "ymax", "zmin", "zmax"}) mesh.node_sets.erase(s);
  return mesh;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_demo_fixture <output-dir>\n";
    return 2;
  }
  const fs::path dir = argv[1];
  fs::create_directories(dir);

  write_mesh(dir / "mesh.json", demo_mesh());

  // Scan frame = model frame rotated 90 degrees about z and shifted; the pose
  // file maps scan coordinates back onto the model.
  RigidTransform pose;
  pose.rotation << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  pose.translation = Vec3(20.0, -5.0, 1.5);
  write_transform(dir / "pose.json", pose);
  const RigidTransform to_scan = pose.inverse();

  VoxelGrid model_grid;
  model_grid.dims = {43, 43, 7};
  model_grid.spacing = Vec3(0.3125, 0.3125, 0.6);
  model_grid.origin = Vec3(-0.34375, -0.34375, -0.3);
  VoxelGrid scan_grid = apply_pose(model_grid, to_scan);

  std::mt19937_64 rng(20240611);
  std::normal_distribution<double> noise(0.0, kNoiseSigma);
  std::vector<std::vector<double>> echoes(std::size(kEchoTimes), std::vector<double>(model_grid.size()));
  for (std::int64_t k = 0; k < model_grid.dims[2]; ++k)
    for (std::int64_t j = 0; j < model_grid.dims[1]; ++j)
      for (std::int64_t i = 0; i < model_grid.dims[0]; ++i) {
        const Vec3 p = index_to_world(model_grid, {i, j, k});
        const bool tissue = p.x() > 0 && p.x() < kSlabX && p.y() > 0 && p.y() < kSlabY && p.z() > 0 &&
                            p.z() < kSlabZ;
        const std::size_t v = model_grid.linear(i, j, k);
        for (std::size_t e = 0; e < std::size(kEchoTimes); ++e)
          echoes[e][v] = tissue ? kS0 * std::exp(-kEchoTimes[e] / true_t2(p)) + noise(rng) : 0.0;
      }
  json echo_list = json::array();
  for (std::size_t e = 0; e < std::size(kEchoTimes); ++e) {
    VoxelGrid g = scan_grid;
    g.unit = VoxelUnit::arbitrary_signal;
    g.values = echoes[e];
    char name[32];
    std::snprintf(name, sizeof name, "echo_%02zu.json", e);
    write_volume(dir / name, g, kEchoTimes[e]);
    echo_list.push_back(name);
  }

  const json model = {
      {"materials", {{"field_poisson", 0.45}}},
      {"fixed", json::array({{{"node_set", "bottom"}, {"dofs", "xyz"}}, {{"node_set", "top"}, {"dofs", "xy"}}})},
      {"prescribed",
       json::array({{{"node_set", "top"}, {"dof", "z"}, {"value_mm", -0.3}, {"curve", "stance"}}})},
      {"curves", {{"stance", json::array({{0.0, 0.0}, {0.1, 0.6}, {0.55, 1.0}, {1.0, 0.8}})}}},
      {"schedule",
       {{"ramp_steps", 1},
        {"stance_steps", 2},
        {"markers", json::array({{{"name", "heel-strike"}, {"time", 0.1}},
                                 {{"name", "midstance"}, {"time", 0.55}},
                                 {{"name", "heel-off"}, {"time", 1.0}}})}}}};
  std::ofstream(dir / "model.json") << model.dump(2) << '\n';

  const json config = {
      {"out_dir", "out"},
      {"echoes", echo_list},
      {"mesh", "mesh.json"},
      {"transform", "pose.json"},
      {"model", "model.json"},
      {"fit", {{"drop_first_echo", false}}},
      {"smoothing", {{"enabled", true}, {"iterations", 5}, {"time_step", 0.125}, {"conductance", 3.0}}},
      {"transfer", {{"method", "weighted"}, {"coverage_floor", 0.01}}},
      {"relation", "baseline"},
      {"study",
       {{"family", "shift"},
        {"fractions", {-0.1, 0.0, 0.1, 0.2, 0.3, 0.4, 0.5}},
        {"markers", {"heel-strike", "midstance", "heel-off"}}}},
      {"jobs", 1}};
  std::ofstream(dir / "config.json") << config.dump(2) << '\n';
  std::cout << "demo fixture written to " << dir.string() << '\n';
  return 0;
}
