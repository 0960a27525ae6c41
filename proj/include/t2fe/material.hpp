#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "t2fe/mesh.hpp"
#include "t2fe/simd/kernels.hpp"
#include "t2fe/transfer.hpp"

namespace t2fe {

enum class PerturbationFamily { baseline, modulus_shift, altered_slope, composite };

std::string to_string(PerturbationFamily family);
PerturbationFamily perturbation_family_from_string(const std::string& text);

struct Provenance {
  PerturbationFamily family = PerturbationFamily::baseline;
  double fraction = 0.0;
  /// E(t2_min) - E(t2_max) of the relation the perturbations started from;
  /// modulus shifts are measured in units of this span.
  double baseline_span_pa = 0.0;
};

/// Clamped linear T2 -> E_D map, held in point-slope form about a pivot
/// (the clamp midpoint) so that slope changes leave E(pivot) bit-exact:
///
///   E(t2) = pivot_e + slope * (clamp(t2, t2_min, t2_max) - pivot_t2)
struct LinearRelation {
  double slope = 0.0;     // Pa/ms
  double pivot_t2 = 0.0;  // ms
  double pivot_e = 0.0;   // Pa
  double t2_min = 0.0;    // ms
  double t2_max = 0.0;    // ms
  Provenance provenance;

  /// E = -(3.5/3)e5 * T2 + 9.75e6 Pa on [15, 75] ms.
  static LinearRelation baseline();
  /// Pivot placed at the clamp midpoint.
  static LinearRelation from_slope_intercept(double slope, double intercept, double t2_min,
                                             double t2_max);

  double intercept() const { return pivot_e - slope * pivot_t2; }
  void validate() const;
};

double clamp_t2(const LinearRelation& r, double t2);
double e_d_from_t2(const LinearRelation& r, double t2);

/// Default perturbation protocol covers f in [-0.10, 0.50].
bool is_protocol_fraction(double f);

/// Translates E_D by f times the baseline span; slope and clamps unchanged.
LinearRelation shift_modulus(const LinearRelation& r, double f);

/// Scales the slope by (1 - f) about the pivot. f > 1 (sign flip) is
/// rejected; f = 1 gives a homogeneous modulus. Flip kSlopeSign to -1 to read
/// the fraction as slope * (1 + f) instead.
inline constexpr double kSlopeSign = 1.0;
LinearRelation alter_slope(const LinearRelation& r, double f);

struct ElasticConstants {
  double young = 0.0;    // Pa
  double poisson = 0.0;
  double mu = 0.0;       // Pa
  double lambda = 0.0;   // Pa
};

ElasticConstants lame_from_young_poisson(double young, double poisson);

inline constexpr double kCartilagePoisson = 0.45;
inline constexpr double kMeniscusYoung = 20.0e6;
inline constexpr double kMeniscusPoisson = 0.3;

/// E_D per element from a T2 field (ms). Coverage is carried over.
ElementField e_d_field(const LinearRelation& r, const ElementField& t2,
                       const simd::KernelTable& kernels = simd::active_kernels());

nlohmann::json to_json(const LinearRelation& r);
LinearRelation relation_from_json(const nlohmann::json& j);
void write_relation(const std::filesystem::path& path, const LinearRelation& r);
LinearRelation read_relation(const std::filesystem::path& path);

/// Solver-neutral material table: element_id,part,young_pa,poisson,mu_pa,lambda_pa.
void write_material_table(const std::filesystem::path& path, const HexMesh& mesh,
                          const std::vector<ElasticConstants>& constants);

}  // namespace t2fe
