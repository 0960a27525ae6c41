#include "t2fe/fem_io.hpp"

#include <fstream>
#include <map>

#include "t2fe/format.hpp"

namespace t2fe {

namespace {

using nlohmann::json;

int parse_dof(const json& j) {
  if (j.is_number_integer()) return j.get<int>();
  const std::string s = j.get<std::string>();
  if (s == "x") return 0;
  if (s == "y") return 1;
  if (s == "z") return 2;
  throw InputError("dof must be x, y, z or 0..2 (got '" + s + "')");
}

Vec3 parse_vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw InputError(std::string(what) + " must be a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Curve parse_curve_ref(const json& j, const std::map<std::string, Curve>& curves) {
  if (j.is_null()) return Curve::ramp();
  if (j.is_array()) {
    Curve c;
    for (const auto& p : j) c.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    c.validate();
    return c;
  }
  const std::string name = j.get<std::string>();
  const auto it = curves.find(name);
  if (it == curves.end()) throw InputError("unknown curve '" + name + "'");
  return it->second;
}

StepSchedule parse_schedule(const json& j) {
  std::vector<Marker> markers;
  if (j.contains("markers"))
    for (const auto& m : j.at("markers"))
      markers.push_back({m.at("name").get<std::string>(), m.at("time").get<double>()});
  if (j.contains("times")) {
    StepSchedule s;
    s.times = j.at("times").get<std::vector<double>>();
    s.markers.push_back({"ramp-end", kRampEnd});
    for (Marker& m : markers)
      if (m.name != "ramp-end") s.markers.push_back(std::move(m));
    s.validate();
    return s;
  }
  return StepSchedule::standard(j.value("ramp_steps", 2), j.value("stance_steps", 9),
                                std::move(markers));
}

}  // namespace

ModelFile parse_model(const json& j, const std::filesystem::path& base_dir) {
  try {
    ModelFile m;
    if (j.contains("mesh") && !j.at("mesh").is_null())
      m.mesh = base_dir / j.at("mesh").get<std::string>();
    if (j.contains("e_d_field") && !j.at("e_d_field").is_null())
      m.e_d_field = base_dir / j.at("e_d_field").get<std::string>();
    if (j.contains("materials")) {
      const json& mat = j.at("materials");
      m.materials.field_poisson = mat.value("field_poisson", kCartilagePoisson);
      if (mat.contains("homogeneous")) {
        m.materials.homogeneous.clear();
        for (const auto& [label, c] : mat.at("homogeneous").items())
          m.materials.homogeneous.emplace_back(
              part_from_string(label),
              lame_from_young_poisson(c.at("young_pa").get<double>(), c.at("poisson").get<double>()));
      }
    }
    std::map<std::string, Curve> curves{{"ramp", Curve::ramp()}};
    if (j.contains("curves"))
      for (const auto& [name, pts] : j.at("curves").items()) curves[name] = parse_curve_ref(pts, {});
    for (const auto& f : j.value("fixed", json::array())) {
      FixedBC bc;
      bc.node_set = f.at("node_set").get<std::string>();
      const std::string dofs = f.value("dofs", std::string("xyz"));
      bc.dofs = {dofs.find('x') != std::string::npos, dofs.find('y') != std::string::npos,
                 dofs.find('z') != std::string::npos};
      m.fixed.push_back(bc);
    }
    for (const auto& p : j.value("prescribed", json::array())) {
      PrescribedDisplacement bc;
      bc.node_set = p.at("node_set").get<std::string>();
      bc.dof = parse_dof(p.at("dof"));
      bc.value_mm = p.at("value_mm").get<double>();
      bc.curve = parse_curve_ref(p.value("curve", json()), curves);
      m.prescribed.push_back(bc);
    }
    for (const auto& l : j.value("loads", json::array())) {
      NodalLoad load;
      load.node_set = l.at("node_set").get<std::string>();
      load.force_n = parse_vec3(l.at("force_n"), "force_n");
      load.curve = parse_curve_ref(l.value("curve", json()), curves);
      m.loads.push_back(load);
    }
    for (const auto& s : j.value("springs", json::array())) {
      SpringSpec spec;
      spec.node_set = s.at("node_set").get<std::string>();
      spec.stiffness_n_per_mm = s.at("stiffness_n_per_mm").get<double>();
      if (s.contains("direction") && !s.at("direction").is_null())
        spec.direction = parse_vec3(s.at("direction"), "direction");
      m.springs.push_back(spec);
    }
    if (j.contains("schedule")) m.schedule = parse_schedule(j.at("schedule"));
    return m;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model file: ") + e.what());
  }
}

ModelFile read_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open model file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return parse_model(j, path.parent_path());
}

FEModel build_model(const ModelFile& spec, const HexMesh& mesh, const ElementField& e_d) {
  FEModel m;
  m.mesh = mesh;
  m.materials = assign_materials(mesh, e_d, spec.materials);
  m.fixed = spec.fixed;
  m.prescribed = spec.prescribed;
  m.loads = spec.loads;
  for (const SpringSpec& s : spec.springs) {
    const auto it = mesh.node_sets.find(s.node_set);
    if (it == mesh.node_sets.end()) throw InputError("unknown node set '" + s.node_set + "'");
    for (int node : it->second) m.springs.push_back({node, s.stiffness_n_per_mm, s.direction});
  }
  m.schedule = spec.schedule;
  m.validate();
  return m;
}

void write_solution_csv(const std::filesystem::path& path, const StepResult& step) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "element_id,s11,s22,s33,s12,s23,s13,e11,e22,e33,e12,e23,e13,p1,p3,tau_max,ep1,ep3,"
         "etau_max\n";
  for (std::size_t e = 0; e < step.stress.size(); ++e) {
    const Mat3& s = step.stress[e];
    const Mat3& g = step.strain[e];
    const Principal ps = principal_and_shear(s);
    const Principal pe = principal_and_shear(g);
    out << e;
    for (double v : {s(0, 0), s(1, 1), s(2, 2), s(0, 1), s(1, 2), s(0, 2), g(0, 0), g(1, 1), g(2, 2),
                     g(0, 1), g(1, 2), g(0, 2), ps.p1, ps.p3, ps.tau_max, pe.p1, pe.p3, pe.tau_max})
      out << ',' << format_number(v);
    out << '\n';
  }
}

nlohmann::json diagnostics_json(const SolutionState& state, const StepSchedule& schedule) {
  json steps = json::array();
  for (std::size_t i = 0; i < state.steps.size(); ++i) {
    const StepResult& r = state.steps[i];
    json markers = json::array();
    for (const Marker& m : schedule.markers)
      if (schedule.step_of(m.name) == i) markers.push_back(m.name);
    steps.push_back({{"step", i},
                     {"time", r.time},
                     {"iterations", r.iterations},
                     {"substeps", r.substeps},
                     {"residual_norm_n", r.residual_norm},
                     {"markers", markers}});
  }
  return {{"converged", true}, {"steps", steps}};
}

}  // namespace t2fe
