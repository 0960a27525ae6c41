#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "t2fe/cli.hpp"
#include "t2fe/fem_io.hpp"
#include "t2fe/format.hpp"
#include "t2fe/material.hpp"
#include "t2fe/mesh_io.hpp"
#include "t2fe/volume_io.hpp"

namespace t2fe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const std::string& text, const fs::path& base, const fs::path& out) {
  const std::string token = "$OUT";
  if (text.rfind(token, 0) == 0) {
    std::string rest = text.substr(token.size());
    while (!rest.empty() && (rest.front() == '/' || rest.front() == '\\')) rest.erase(rest.begin());
    return out / rest;
  }
  const fs::path p(text);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

std::vector<double> parse_fraction_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::logic_error&) {
      throw InputError("bad fraction '" + item + "' in --fractions");
    }
    if (used != item.size()) throw InputError("bad fraction '" + item + "' in --fractions");
    out.push_back(v);
  }
  if (out.empty()) throw InputError("--fractions list is empty");
  return out;
}

PipelineConfig parse_config(const json& j, const fs::path& config_dir,
                            const std::optional<fs::path>& out_override) {
  PipelineConfig c;
  c.config_dir = config_dir;
  try {
    if (out_override)
      c.out_dir = *out_override;
    else
      c.out_dir = resolve(j.value("out_dir", std::string("out")), config_dir, config_dir);
    auto path_of = [&](const char* key) -> std::optional<fs::path> {
      if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
      return resolve(j.at(key).get<std::string>(), config_dir, c.out_dir);
    };
    for (const auto& e : j.value("echoes", json::array()))
      c.echoes.push_back(resolve(e.get<std::string>(), config_dir, c.out_dir));
    c.t2_volume = path_of("t2_volume");
    c.mesh = path_of("mesh");
    c.transform = path_of("transform");
    c.model = path_of("model");
    if (j.contains("fit")) {
      const json& f = j.at("fit");
      c.fit.drop_first_echo = f.value("drop_first_echo", c.fit.drop_first_echo);
      c.fit.refine = f.value("refine", c.fit.refine);
      c.fit.refine_iterations = f.value("refine_iterations", c.fit.refine_iterations);
    }
    if (j.contains("smoothing")) {
      const json& s = j.at("smoothing");
      c.smoothing = s.value("enabled", c.smoothing);
      c.diffusion.iterations = s.value("iterations", c.diffusion.iterations);
      c.diffusion.time_step = s.value("time_step", c.diffusion.time_step);
      c.diffusion.conductance = s.value("conductance", c.diffusion.conductance);
    }
    if (j.contains("transfer")) {
      const json& t = j.at("transfer");
      c.method = t.value("method", c.method);
      c.transfer.coverage_floor = t.value("coverage_floor", c.transfer.coverage_floor);
    }
    if (j.contains("relation") && !j.at("relation").is_null()) {
      const json& r = j.at("relation");
      if (r.is_object())
        c.relation = relation_from_json(r);
      else if (r.get<std::string>() != "baseline")
        c.relation = read_relation(resolve(r.get<std::string>(), config_dir, c.out_dir));
    }
    if (j.contains("study")) {
      const json& s = j.at("study");
      c.family = s.value("family", c.family);
      if (s.contains("fractions")) c.fractions = s.at("fractions").get<std::vector<double>>();
      if (s.contains("markers")) c.markers = s.at("markers").get<std::vector<std::string>>();
      if (s.contains("metrics")) {
        c.metrics.clear();
        for (const auto& m : s.at("metrics")) c.metrics.push_back(metric_from_string(m.get<std::string>()));
      }
      if (s.contains("parts")) {
        c.study_parts.clear();
        for (const auto& p : s.at("parts")) c.study_parts.push_back(part_from_string(p.get<std::string>()));
      }
      c.histogram_bins = s.value("histogram_bins", c.histogram_bins);
    }
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      c.solver.max_iterations = s.value("max_iterations", c.solver.max_iterations);
      c.solver.max_bisections = s.value("max_bisections", c.solver.max_bisections);
      c.solver.relative_tolerance = s.value("relative_tolerance", c.solver.relative_tolerance);
      c.solver.absolute_tolerance = s.value("absolute_tolerance", c.solver.absolute_tolerance);
    }
    c.jobs = j.value("jobs", c.jobs);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed config: ") + e.what());
  }
  return c;
}

PipelineConfig load_config(const fs::path& path, const std::optional<fs::path>& out_override) {
  if (!fs::exists(path)) throw InputError("missing config file " + path.string());
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path().empty() ? fs::path(".") : path.parent_path(), out_override);
}

namespace {

/// Files and directories created by one stage; removed again unless the
/// stage commits.
class OutputSet {
 public:
  explicit OutputSet(fs::path root) : root_(std::move(root)) {}
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = created_.rbegin(); it != created_.rend(); ++it) fs::remove_all(*it, ec);
    if (created_root_) fs::remove(root_, ec);  // only succeeds when empty
  }

  void open() {
    if (!fs::exists(root_)) {
      fs::create_directories(root_);
      created_root_ = true;
    }
  }
  fs::path file(const fs::path& p) {
    if (!fs::exists(p)) created_.push_back(p);
    return p;
  }
  fs::path dir(const fs::path& p) {
    if (!fs::exists(p)) {
      created_.push_back(p);
      fs::create_directories(p);
    }
    return p;
  }
  void commit() { committed_ = true; }

 private:
  fs::path root_;
  std::vector<fs::path> created_;
  bool created_root_ = false;
  bool committed_ = false;
};

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw InputError("missing " + what + " file: " + p.string());
}

std::string method_key(const std::string& method) {
  if (method == "nn" || method == "weighted") return method;
  throw InputError("--method must be nn or weighted (got '" + method + "')");
}

PerturbationFamily family_of(const std::string& family) {
  if (family == "shift") return PerturbationFamily::modulus_shift;
  if (family == "slope") return PerturbationFamily::altered_slope;
  throw InputError("--family must be shift or slope (got '" + family + "')");
}

void write_grid(OutputSet& outs, const fs::path& header, const VoxelGrid& grid) {
  outs.file(header);
  outs.file(raw_path_for(header));
  write_volume(header, grid);
}

VoxelGrid posed_grid(const PipelineConfig& c, const VoxelGrid& grid) {
  if (!c.transform) return grid;
  return apply_pose(grid, read_transform(*c.transform));
}

HexMesh load_mesh(const PipelineConfig& c) {
  if (!c.mesh) throw InputError("config has no 'mesh' entry");
  require_file(*c.mesh, "mesh");
  HexMesh mesh = read_mesh(*c.mesh);
  mesh.validate();
  return mesh;
}

ModelFile load_model(const PipelineConfig& c) {
  if (!c.model) throw InputError("config has no 'model' entry");
  require_file(*c.model, "model");
  ModelFile m = read_model_file(*c.model);
  if (m.mesh.empty()) {
    if (!c.mesh) throw InputError("neither the model nor the config names a mesh");
    m.mesh = *c.mesh;
  }
  require_file(m.mesh, "mesh");
  return m;
}

void check_common(const PipelineConfig& c) {
  if (c.jobs < 1) throw InputError("--jobs must be at least 1");
  if (c.transform) require_file(*c.transform, "transform");
}

// ---- stages -----------------------------------------------------------------

T2Fit do_fit(const PipelineConfig& c) {
  std::vector<fs::path> headers = c.echoes;
  for (const fs::path& h : headers) {
    require_file(h, "echo volume");
    require_file(raw_path_for(h), "echo data");
  }
  T2FitOptions opt = c.fit;
  opt.jobs = c.jobs;
  return fit_t2(read_echo_series(headers), opt);
}

std::string stage_fit(const PipelineConfig& c, bool validate_only, OutputSet& outs) {
  if (c.echoes.size() < 3) throw InputError("fit-t2 needs at least 3 'echoes' in the config");
  for (const fs::path& h : c.echoes) require_file(h, "echo volume");
  if (validate_only) return "fit-t2: config ok";
  const T2Fit fit = do_fit(c);
  outs.open();
  write_grid(outs, c.fitted_t2(), fit.t2);
  write_grid(outs, c.out_dir / "s0.json", fit.s0);
  const auto& d = fit.t2.dims;
  return "fit-t2: " + std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]) +
         " voxels, " + std::to_string(fit.invalid_count) + " invalid -> " + c.fitted_t2().string();
}

VoxelGrid do_smooth(const PipelineConfig& c, const VoxelGrid& grid) {
  DiffusionParams p = c.diffusion;
  p.jobs = c.jobs;
  return smooth_anisotropic_diffusion(grid, p);
}

std::string stage_smooth(const PipelineConfig& c, bool validate_only, OutputSet& outs) {
  const fs::path in = c.raw_t2();
  if (c.diffusion.iterations < 0 || !(c.diffusion.time_step > 0.0) ||
      c.diffusion.time_step > kMaxDiffusionTimeStep || !(c.diffusion.conductance > 0.0))
    throw InputError("smoothing parameters out of range (iterations >= 0, 0 < time_step <= 1/6, "
                     "conductance > 0)");
  if (validate_only) {
    if (c.t2_volume) require_file(in, "T2 volume");
    return "smooth: config ok";
  }
  require_file(in, "T2 volume");
  const VoxelGrid out = do_smooth(c, read_volume(in).grid);
  outs.open();
  write_grid(outs, c.smoothed_t2(), out);
  return "smooth: " + std::to_string(c.diffusion.iterations) + " iterations -> " +
         c.smoothed_t2().string();
}

ElementField do_assign(const PipelineConfig& c, const std::string& method, const HexMesh& mesh,
                       const VoxelGrid& grid) {
  if (method == "nn") return assign_nearest_neighbor(mesh, grid, c.jobs);
  TransferOptions opt = c.transfer;
  opt.jobs = c.jobs;
  return assign_volume_weighted(mesh, grid, opt);
}

/// agreement.csv and texture.csv once both element fields exist.
bool write_comparison(const PipelineConfig& c, const HexMesh& mesh, OutputSet& outs,
                      std::string* summary) {
  const fs::path nn = c.element_t2("nn"), w = c.element_t2("weighted");
  if (!fs::exists(nn) || !fs::exists(w)) return false;
  const ElementField a = read_element_field_csv(w);
  const ElementField b = read_element_field_csv(nn);
  a.validate(mesh.element_count());
  b.validate(mesh.element_count());
  const AgreementStats s = agreement(a, b);
  const TextureStats tw = texture_stats(mesh, a, c.study_parts);
  const TextureStats tn = texture_stats(mesh, b, c.study_parts);
  {
    std::ofstream out(outs.file(c.out_dir / "agreement.csv"), std::ios::binary);
    out << "# differences: volume-weighted minus nearest-neighbor (ms)\n";
    out << "statistic,value\n";
    out << "n," << s.n << '\n';
    out << "bias," << format_number(s.bias, 12) << '\n';
    out << "sd," << format_number(s.sd, 12) << '\n';
    out << "loa_low," << format_number(s.loa_low, 12) << '\n';
    out << "loa_high," << format_number(s.loa_high, 12) << '\n';
    out << "r_squared," << format_number(s.r_squared, 12) << '\n';
  }
  {
    std::ofstream out(outs.file(c.out_dir / "texture.csv"), std::ios::binary);
    out << "method,roughness_ms,rms_ms,elements\n";
    out << "nearest-neighbor," << format_number(tn.roughness, 12) << ',' << format_number(tn.rms, 12)
        << ',' << tn.count << '\n';
    out << "volume-weighted," << format_number(tw.roughness, 12) << ',' << format_number(tw.rms, 12)
        << ',' << tw.count << '\n';
  }
  if (summary) {
    *summary = "bias " + format_number(s.bias, 4) + " ms, LoA [" + format_number(s.loa_low, 4) + ", " +
               format_number(s.loa_high, 4) + "], r2 " + format_number(s.r_squared, 4) +
               "; roughness nn " + format_number(tn.roughness, 4) + " vs weighted " +
               format_number(tw.roughness, 4);
  }
  return true;
}

std::string stage_assign(const PipelineConfig& c, bool validate_only, OutputSet& outs,
                         std::ostream& warn) {
  const std::string method = method_key(c.method);
  if (!(c.transfer.coverage_floor >= 0.0 && c.transfer.coverage_floor <= 1.0))
    throw InputError("coverage_floor must lie in [0, 1]");
  if (!c.mesh) throw InputError("config has no 'mesh' entry");
  require_file(*c.mesh, "mesh");
  if (validate_only) return "assign: config ok";
  const HexMesh mesh = load_mesh(c);
  require_file(c.assign_input(), "T2 volume");
  const VoxelGrid grid = posed_grid(c, read_volume(c.assign_input()).grid);
  const ElementField field = do_assign(c, method, mesh, grid);
  if (field.warnings > 0)
    warn << "assign: warning: " << field.warnings << " element(s) used the nearest-valid-voxel fallback\n";
  outs.open();
  write_element_field_csv(outs.file(c.element_t2(method)), field);
  std::string cmp;
  std::string line = "assign: " + std::to_string(field.size()) + " elements (" +
                     to_string(field.method) + ") -> " + c.element_t2(method).string();
  if (write_comparison(c, mesh, outs, &cmp)) line += "; " + cmp;
  return line;
}

ElementField load_element_t2(const PipelineConfig& c) {
  const fs::path p = c.element_t2(method_key(c.method));
  require_file(p, "element T2");
  return read_element_field_csv(p);
}

std::string stage_relate(const PipelineConfig& c, bool validate_only, OutputSet& outs) {
  c.relation.validate();
  if (validate_only) return "relate: config ok";
  const ElementField t2 = load_element_t2(c);
  const ElementField e = e_d_field(c.relation, t2);
  outs.open();
  write_relation(outs.file(c.out_dir / "relation.json"), c.relation);
  write_element_field_csv(outs.file(c.out_dir / "e_d.csv"), e);
  if (c.mesh) {
    const HexMesh mesh = load_mesh(c);
    e.validate(mesh.element_count());
    MaterialAssignment rule;
    if (c.model) rule = load_model(c).materials;
    write_material_table(outs.file(c.out_dir / "materials.csv"), mesh, assign_materials(mesh, e, rule));
  }
  const auto [lo, hi] = std::minmax_element(e.values.begin(), e.values.end());
  return "relate: E_D in [" + format_number(e.values.empty() ? 0.0 : *lo, 6) + ", " +
         format_number(e.values.empty() ? 0.0 : *hi, 6) + "] Pa -> " + (c.out_dir / "e_d.csv").string();
}

std::string stage_perturb(const PipelineConfig& c, bool validate_only, OutputSet& outs,
                          std::ostream& warn) {
  const PerturbationFamily fam = family_of(c.family);
  for (double f : c.fractions) {
    if (fam == PerturbationFamily::altered_slope && f > 1.0)
      throw InputError("altered-slope fraction " + format_number(f) + " would flip the slope sign");
    if (!is_protocol_fraction(f))
      warn << "perturb: warning: fraction " << format_number(f)
           << " lies outside the default protocol range [-0.10, 0.50]\n";
  }
  if (validate_only) return "perturb: config ok";
  const ElementField t2 = load_element_t2(c);
  outs.open();
  const fs::path dir = outs.dir(c.out_dir / "perturb");
  for (double f : c.fractions) {
    const LinearRelation r =
        fam == PerturbationFamily::modulus_shift ? shift_modulus(c.relation, f) : alter_slope(c.relation, f);
    const std::string stem = c.family + "_f" + fraction_label(f);
    write_relation(outs.file(dir / ("relation_" + stem + ".json")), r);
    write_element_field_csv(outs.file(dir / ("e_d_" + stem + ".csv")), e_d_field(r, t2));
  }
  return "perturb: " + std::to_string(c.fractions.size()) + " " + to_string(fam) + " relations -> " +
         dir.string();
}

std::string stage_solve(const PipelineConfig& c, bool validate_only, OutputSet& outs) {
  const ModelFile spec = load_model(c);
  const fs::path e_path = spec.e_d_field ? *spec.e_d_field : c.out_dir / "e_d.csv";
  if (validate_only) {
    if (spec.e_d_field) require_file(e_path, "E_D field");
    return "solve: config ok";
  }
  require_file(e_path, "E_D field");
  const HexMesh mesh = read_mesh(spec.mesh);
  const FEModel model = build_model(spec, mesh, read_element_field_csv(e_path, FieldUnit::pascal));
  SolverOptions opt = c.solver;
  opt.jobs = c.jobs;
  const SolutionState state = solve_static(model, opt);
  outs.open();
  const fs::path dir = outs.dir(c.out_dir / "solution");
  for (std::size_t i = 0; i < state.steps.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%03zu.csv", i);
    write_solution_csv(outs.file(dir / name), state.steps[i]);
  }
  std::ofstream(outs.file(dir / "diagnostics.json"), std::ios::binary)
      << diagnostics_json(state, model.schedule).dump(2) << '\n';
  int iterations = 0;
  for (const StepResult& s : state.steps) iterations += s.iterations;
  return "solve: " + std::to_string(state.steps.size()) + " steps, " + std::to_string(iterations) +
         " Newton iterations -> " + dir.string();
}

StudyConfig make_study(const PipelineConfig& c, const ModelFile& spec, const HexMesh& mesh,
                       const ElementField& t2) {
  StudyConfig s;
  s.model = spec;
  s.mesh = mesh;
  s.t2 = t2;
  s.relation = c.relation;
  s.family = family_of(c.family);
  s.fractions = c.fractions;
  if (c.markers.empty())
    for (const Marker& m : spec.schedule.markers) s.markers.push_back(m.name);
  else
    s.markers = c.markers;
  s.metrics = c.metrics;
  s.parts = c.study_parts;
  s.histogram_bins = c.histogram_bins;
  s.solver = c.solver;
  s.jobs = c.jobs;
  return s;
}

std::string stage_study(const PipelineConfig& c, bool validate_only, OutputSet& outs,
                        std::ostream& warn) {
  const ModelFile spec = load_model(c);
  const std::string method = method_key(c.method);
  family_of(c.family);
  if (c.echoes.empty() && !c.t2_volume) throw InputError("study needs 'echoes' or 't2_volume'");
  for (const fs::path& h : c.echoes) require_file(h, "echo volume");
  if (c.t2_volume) require_file(*c.t2_volume, "T2 volume");
  for (double f : c.fractions)
    if (!is_protocol_fraction(f))
      warn << "study: warning: fraction " << format_number(f)
           << " lies outside the default protocol range [-0.10, 0.50]\n";
  if (validate_only) {
    const HexMesh mesh = read_mesh(spec.mesh);
    make_study(c, spec, mesh, ElementField::derived_from(std::vector<double>(mesh.element_count(), 45.0),
                                                         FieldUnit::milliseconds))
        .validate();
    return "study: config ok";
  }

  outs.open();
  VoxelGrid grid;
  if (!c.echoes.empty()) {
    const T2Fit fit = do_fit(c);
    write_grid(outs, c.fitted_t2(), fit.t2);
    write_grid(outs, c.out_dir / "s0.json", fit.s0);
    grid = fit.t2;
  } else {
    grid = read_volume(*c.t2_volume).grid;
  }
  if (c.smoothing) {
    grid = do_smooth(c, grid);
    write_grid(outs, c.smoothed_t2(), grid);
  }
  const HexMesh mesh = read_mesh(spec.mesh);
  const ElementField t2 = do_assign(c, method, mesh, posed_grid(c, grid));
  if (t2.warnings > 0)
    warn << "study: warning: " << t2.warnings << " element(s) used the nearest-valid-voxel fallback\n";
  write_element_field_csv(outs.file(c.element_t2(method)), t2);

  const StudyReport report = run_study(make_study(c, spec, mesh, t2));
  const fs::path dir = outs.dir(c.out_dir / "study");
  write_study_report(dir, report);
  for (const FractionStatus& s : report.status)
    if (!s.ok) warn << "study: warning: fraction " << format_number(s.fraction) << " failed: " << s.error << '\n';
  return "study: " + std::to_string(report.fractions.size()) + " fractions x " +
         std::to_string(report.markers.size()) + " markers" +
         (report.complete() ? "" : " (incomplete)") + " -> " + dir.string();
}

std::string stage_report(const PipelineConfig& c, bool validate_only, OutputSet& outs) {
  if (validate_only) return "report: config ok";
  const fs::path study_json = c.out_dir / "study" / "study.json";
  const bool have_fields = fs::exists(c.element_t2("nn")) && fs::exists(c.element_t2("weighted"));
  if (!have_fields && !fs::exists(study_json))
    throw InputError("nothing to report in " + c.out_dir.string() +
                     ": run 'assign' with both methods or 'study' first");
  outs.open();
  std::string line = "report:";
  if (have_fields) {
    std::string cmp;
    write_comparison(c, load_mesh(c), outs, &cmp);
    line += " " + cmp;
  }
  if (fs::exists(study_json)) {
    std::ifstream in(study_json);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw InputError(study_json.string() + ": " + e.what());
    }
    std::ofstream out(outs.file(c.out_dir / "study_summary.csv"), std::ios::binary);
    out << "fraction,marker,metric,baseline_top_mean,perturbed_top_mean,percent_change,exceedance\n";
    for (const auto& r : j.at("rows")) {
      out << fraction_label(r.at("fraction").get<double>()) << ',' << r.at("marker").get<std::string>()
          << ',' << r.at("metric").get<std::string>() << ','
          << format_number(r.at("baseline_top_mean").get<double>(), 12) << ','
          << format_number(r.at("perturbed_top_mean").get<double>(), 12) << ','
          << (r.at("percent_change").is_null() ? std::string("undefined")
                                               : format_number(r.at("percent_change").get<double>(), 12))
          << ',' << r.at("exceedance_count").get<std::size_t>() << '\n';
    }
    line += (have_fields ? "; " : " ") + std::string("study summary -> ") + (c.out_dir / "study_summary.csv").string();
  }
  return line;
}

}  // namespace

std::string run_stage(const std::string& stage, const PipelineConfig& c, bool validate_only,
                      std::ostream& warn) {
  check_common(c);
  OutputSet outs(c.out_dir);
  std::string line;
  if (stage == "fit-t2")
    line = stage_fit(c, validate_only, outs);
  else if (stage == "smooth")
    line = stage_smooth(c, validate_only, outs);
  else if (stage == "assign")
    line = stage_assign(c, validate_only, outs, warn);
  else if (stage == "relate")
    line = stage_relate(c, validate_only, outs);
  else if (stage == "perturb")
    line = stage_perturb(c, validate_only, outs, warn);
  else if (stage == "solve")
    line = stage_solve(c, validate_only, outs);
  else if (stage == "study")
    line = stage_study(c, validate_only, outs, warn);
  else if (stage == "report")
    line = stage_report(c, validate_only, outs);
  else
    throw InputError("unknown subcommand '" + stage + "'");
  outs.commit();
  return line;
}

}  // namespace t2fe::cli
