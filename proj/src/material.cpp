#include "t2fe/material.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "t2fe/format.hpp"

namespace t2fe {

std::string to_string(PerturbationFamily family) {
  switch (family) {
    case PerturbationFamily::baseline: return "baseline";
    case PerturbationFamily::modulus_shift: return "modulus-shift";
    case PerturbationFamily::altered_slope: return "altered-slope";
    case PerturbationFamily::composite: return "composite";
  }
  return "composite";
}

PerturbationFamily perturbation_family_from_string(const std::string& text) {
  if (text == "baseline") return PerturbationFamily::baseline;
  if (text == "modulus-shift" || text == "shift") return PerturbationFamily::modulus_shift;
  if (text == "altered-slope" || text == "slope") return PerturbationFamily::altered_slope;
  if (text == "composite") return PerturbationFamily::composite;
  throw InputError("unknown perturbation family '" + text + "'");
}

LinearRelation LinearRelation::baseline() {
  LinearRelation r;
  r.slope = -3.5e5 / 3.0;
  r.t2_min = 15.0;
  r.t2_max = 75.0;
  r.pivot_t2 = 45.0;
  r.pivot_e = 4.5e6;
  r.provenance.baseline_span_pa = 7.0e6;
  return r;
}

LinearRelation LinearRelation::from_slope_intercept(double slope, double intercept, double t2_min,
                                                    double t2_max) {
  LinearRelation r;
  r.slope = slope;
  r.t2_min = t2_min;
  r.t2_max = t2_max;
  r.pivot_t2 = 0.5 * (t2_min + t2_max);
  r.pivot_e = slope * r.pivot_t2 + intercept;
  r.provenance.baseline_span_pa = slope * (t2_min - t2_max);
  r.validate();
  return r;
}

void LinearRelation::validate() const {
  for (double v : {slope, pivot_t2, pivot_e, t2_min, t2_max})
    if (!std::isfinite(v)) throw InputError("T2-modulus relation parameters must be finite");
  if (!(t2_min < t2_max)) throw InputError("T2 clamp bounds require t2_min < t2_max");
}

double clamp_t2(const LinearRelation& r, double t2) {
  if (std::isnan(t2)) throw InputError("T2 value is NaN");
  return std::min(std::max(t2, r.t2_min), r.t2_max);
}

double e_d_from_t2(const LinearRelation& r, double t2) {
  return r.pivot_e + r.slope * (clamp_t2(r, t2) - r.pivot_t2);
}

bool is_protocol_fraction(double f) { return f >= -0.10 - 1e-12 && f <= 0.50 + 1e-12; }

namespace {

void check_fraction(double f) {
  if (!std::isfinite(f)) throw InputError("perturbation fraction must be finite");
}

}  // namespace

LinearRelation shift_modulus(const LinearRelation& r, double f) {
  check_fraction(f);
  r.validate();
  LinearRelation out = r;
  out.pivot_e = r.pivot_e + f * r.provenance.baseline_span_pa;
  switch (r.provenance.family) {
    case PerturbationFamily::baseline:
      out.provenance.family = PerturbationFamily::modulus_shift;
      out.provenance.fraction = f;
      break;
    case PerturbationFamily::modulus_shift:
      out.provenance.fraction = r.provenance.fraction + f;
      break;
    default:
      out.provenance.family = PerturbationFamily::composite;
      out.provenance.fraction = std::nan("");
  }
  return out;
}

LinearRelation alter_slope(const LinearRelation& r, double f) {
  check_fraction(f);
  r.validate();
  const double factor = 1.0 - kSlopeSign * f;
  if (factor < 0.0)
    throw InputError("altered-slope fraction " + format_number(f) + " would flip the slope sign");
  LinearRelation out = r;
  out.slope = r.slope * factor;
  switch (r.provenance.family) {
    case PerturbationFamily::baseline:
      out.provenance.family = PerturbationFamily::altered_slope;
      out.provenance.fraction = f;
      break;
    case PerturbationFamily::altered_slope:
      out.provenance.fraction = 1.0 - (1.0 - r.provenance.fraction) * factor;
      break;
    default:
      out.provenance.family = PerturbationFamily::composite;
      out.provenance.fraction = std::nan("");
  }
  return out;
}

ElasticConstants lame_from_young_poisson(double young, double poisson) {
  if (!(young > 0.0) || !std::isfinite(young))
    throw InputError("Young's modulus must be positive and finite");
  if (!(poisson > 0.0 && poisson < 0.5)) throw InputError("Poisson's ratio must lie in (0, 0.5)");
  ElasticConstants c;
  c.young = young;
  c.poisson = poisson;
  c.mu = young / (2.0 * (1.0 + poisson));
  c.lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
  return c;
}

ElementField e_d_field(const LinearRelation& r, const ElementField& t2,
                       const simd::KernelTable& kernels) {
  r.validate();
  for (double v : t2.values)
    if (!std::isfinite(v)) throw InputError("T2 element field contains a nonfinite value");
  ElementField out;
  out.values.resize(t2.size());
  out.coverage = t2.coverage;
  out.unit = FieldUnit::pascal;
  out.method = FieldMethod::derived;
  kernels.clamped_affine(t2.values.data(), out.values.data(), t2.size(), r.t2_min, r.t2_max,
                         r.pivot_t2, r.pivot_e, r.slope);
  return out;
}

nlohmann::json to_json(const LinearRelation& r) {
  nlohmann::json prov = {{"family", to_string(r.provenance.family)},
                         {"baseline_span_pa", r.provenance.baseline_span_pa}};
  if (std::isfinite(r.provenance.fraction))
    prov["fraction"] = r.provenance.fraction;
  else
    prov["fraction"] = nullptr;
  return {{"slope_pa_per_ms", r.slope}, {"intercept_pa", r.intercept()},
          {"t2_min_ms", r.t2_min},      {"t2_max_ms", r.t2_max},
          {"pivot_t2_ms", r.pivot_t2},  {"pivot_e_pa", r.pivot_e},
          {"provenance", prov}};
}

LinearRelation relation_from_json(const nlohmann::json& j) {
  try {
    LinearRelation r = LinearRelation::from_slope_intercept(
        j.at("slope_pa_per_ms").get<double>(), j.at("intercept_pa").get<double>(),
        j.at("t2_min_ms").get<double>(), j.at("t2_max_ms").get<double>());
    if (j.contains("pivot_t2_ms") && j.contains("pivot_e_pa")) {
      r.pivot_t2 = j.at("pivot_t2_ms").get<double>();
      r.pivot_e = j.at("pivot_e_pa").get<double>();
    }
    if (j.contains("provenance")) {
      const auto& p = j.at("provenance");
      if (p.is_string()) {
        r.provenance.family = perturbation_family_from_string(p.get<std::string>());
      } else {
        r.provenance.family = perturbation_family_from_string(p.at("family").get<std::string>());
        if (p.contains("fraction"))
          r.provenance.fraction =
              p.at("fraction").is_null() ? std::nan("") : p.at("fraction").get<double>();
        if (p.contains("baseline_span_pa"))
          r.provenance.baseline_span_pa = p.at("baseline_span_pa").get<double>();
      }
    }
    r.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed relation JSON: ") + e.what());
  }
}

void write_relation(const std::filesystem::path& path, const LinearRelation& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(r).dump(2) << '\n';
}

LinearRelation read_relation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open relation file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return relation_from_json(j);
}

void write_material_table(const std::filesystem::path& path, const HexMesh& mesh,
                          const std::vector<ElasticConstants>& constants) {
  if (constants.size() != mesh.element_count())
    throw InputError("material table needs one entry per element");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "element_id,part,young_pa,poisson,mu_pa,lambda_pa\n";
  for (std::size_t e = 0; e < constants.size(); ++e) {
    const ElasticConstants& c = constants[e];
    out << e << ',' << to_string(mesh.parts[e]) << ',' << format_number(c.young) << ','
        << format_number(c.poisson) << ',' << format_number(c.mu) << ',' << format_number(c.lambda)
        << '\n';
  }
}

}  // namespace t2fe
