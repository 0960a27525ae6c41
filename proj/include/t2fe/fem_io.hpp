#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2fe/fem.hpp"

namespace t2fe {

/// Grounded springs attached to every node of a set.
struct SpringSpec {
  std::string node_set;
  double stiffness_n_per_mm = 0.0;
  std::optional<Vec3> direction;
};

/// Model description as stored on disk. Paths are resolved against the
/// model file's directory. "mesh" may be omitted when the caller supplies
/// the mesh (the pipeline config does).
///
///   {"mesh": "mesh.json", "e_d_field": "e_d.csv" (optional),
///    "materials": {"field_poisson": 0.45,
///                  "homogeneous": {"meniscus": {"young_pa": 2e7, "poisson": 0.3}}},
///    "fixed": [{"node_set": "bottom", "dofs": "xyz"}],
///    "prescribed": [{"node_set": "top", "dof": "z", "value_mm": -0.1, "curve": "ramp"}],
///    "loads": [{"node_set": "top", "force_n": [0, 0, -1], "curve": "ramp"}],
///    "springs": [{"node_set": "side", "stiffness_n_per_mm": 20, "direction": [1, 0, 0]}],
///    "curves": {"gait": [[0, 0], [0.1, 0.6], [1, 1]]},
///    "schedule": {"ramp_steps": 2, "stance_steps": 9,
///                 "markers": [{"name": "midstance", "time": 0.55}]}}
///
/// "ramp" is a built-in curve (0 at t = 0 to 1 at t = 0.1). A schedule may
/// give explicit "times" instead of step counts.
struct ModelFile {
  std::filesystem::path mesh;  // empty when not given
  std::optional<std::filesystem::path> e_d_field;
  MaterialAssignment materials;
  std::vector<FixedBC> fixed;
  std::vector<PrescribedDisplacement> prescribed;
  std::vector<NodalLoad> loads;
  std::vector<SpringSpec> springs;
  StepSchedule schedule = StepSchedule::standard();
};

ModelFile parse_model(const nlohmann::json& j, const std::filesystem::path& base_dir);
ModelFile read_model_file(const std::filesystem::path& path);

/// Binds a model description to a mesh and an E_D field (Pa).
FEModel build_model(const ModelFile& spec, const HexMesh& mesh, const ElementField& e_d);

/// element_id, stress (Pa) s11..s13, Green-Lagrange e11..e13, stress
/// p1/p3/tau_max and strain ep1/ep3/etau_max.
void write_solution_csv(const std::filesystem::path& path, const StepResult& step);
nlohmann::json diagnostics_json(const SolutionState& state, const StepSchedule& schedule);

}  // namespace t2fe
