#pragma once

// Static total-Lagrangian solver for compressible neo-Hookean hexahedra.
//
// Units: lengths in mm, forces in N, spring stiffness in N/mm. Moduli and
// reported stresses are in Pa (converted to N/mm^2 = MPa internally).

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "t2fe/material.hpp"
#include "t2fe/mesh.hpp"
#include "t2fe/types.hpp"

namespace t2fe {

// ---- constitutive law -------------------------------------------------------

/// W = mu/2 (I1 - 3) - mu ln J + lambda/2 (ln J)^2. Throws GeometryError when
/// det F <= 0.
double strain_energy_density(const Mat3& F, double mu, double lambda);

/// First Piola-Kirchhoff stress dW/dF = mu (F - F^-T) + lambda ln J F^-T.
Mat3 first_piola(const Mat3& F, double mu, double lambda);

/// sigma = (mu/J)(B - I) + (lambda ln J / J) I with B = F F^T.
Mat3 cauchy_stress(const Mat3& F, double mu, double lambda);

/// E = (F^T F - I) / 2.
Mat3 green_lagrange(const Mat3& F);

struct Principal {
  double p1 = 0.0, p2 = 0.0, p3 = 0.0;  // descending
  double tau_max = 0.0;                 // (p1 - p3) / 2
};

Principal principal_and_shear(const Mat3& symmetric);

// ---- model ------------------------------------------------------------------

/// Piecewise-linear scale factor of pseudo-time, held constant outside its
/// first and last knots.
struct Curve {
  std::vector<std::pair<double, double>> points;

  double at(double t) const;
  void validate() const;
  /// 0 at t = 0 rising linearly to 1 at `t_end`, then 1.
  static Curve ramp(double t_end = 0.1);
};

struct FixedBC {
  std::string node_set;
  std::array<bool, 3> dofs{true, true, true};
};

struct PrescribedDisplacement {
  std::string node_set;
  int dof = 2;  // 0 = x, 1 = y, 2 = z
  double value_mm = 0.0;
  Curve curve = Curve::ramp();
};

/// Force applied to every node of the set.
struct NodalLoad {
  std::string node_set;
  Vec3 force_n = Vec3::Zero();
  Curve curve = Curve::ramp();
};

/// Linear spring from a node to ground: k I (isotropic) or k n n^T.
struct Spring {
  int node = 0;
  double stiffness = 0.0;  // N/mm
  std::optional<Vec3> direction;
};

struct Marker {
  std::string name;
  double time = 0.0;
};

inline constexpr double kRampEnd = 0.1;

/// Pseudo-time steps in (0, 1]; the ramp occupies [0, 0.1].
struct StepSchedule {
  std::vector<double> times;
  std::vector<Marker> markers;

  /// `ramp_steps` equal steps up to 0.1 then `stance_steps` equal steps to 1,
  /// with the "ramp-end" marker plus `extra` markers.
  static StepSchedule standard(int ramp_steps = 2, int stance_steps = 9,
                               std::vector<Marker> extra = {});
  void validate() const;
  /// Index of the step whose time matches the marker.
  std::size_t step_of(const std::string& marker) const;
};

struct FEModel {
  HexMesh mesh;
  std::vector<ElasticConstants> materials;  // one per element
  std::vector<FixedBC> fixed;
  std::vector<PrescribedDisplacement> prescribed;
  std::vector<NodalLoad> loads;
  std::vector<Spring> springs;
  StepSchedule schedule = StepSchedule::standard();

  void validate() const;
};

/// Part-wise material rule: cartilage (and any part without a homogeneous
/// entry) takes E from the E_D field with `field_poisson`; listed parts get
/// fixed constants.
struct MaterialAssignment {
  double field_poisson = kCartilagePoisson;
  std::vector<std::pair<Part, ElasticConstants>> homogeneous = {
      {Part::meniscus, lame_from_young_poisson(kMeniscusYoung, kMeniscusPoisson)}};
};

std::vector<ElasticConstants> assign_materials(const HexMesh& mesh, const ElementField& e_d,
                                               const MaterialAssignment& rule = {});

// ---- solution ---------------------------------------------------------------

struct StepResult {
  double time = 0.0;
  std::vector<Vec3> displacement;  // mm, per node
  std::vector<Mat3> stress;        // Cauchy, Pa, per element (Gauss average)
  std::vector<Mat3> strain;        // Green-Lagrange, per element (Gauss average)
  int iterations = 0;              // Newton iterations summed over substeps
  int substeps = 1;
  double residual_norm = 0.0;      // N
};

struct SolutionState {
  std::vector<StepResult> steps;
  const StepResult& at_marker(const StepSchedule& schedule, const std::string& marker) const;
};

struct SolverOptions {
  int max_iterations = 25;
  int max_bisections = 4;
  double relative_tolerance = 1e-8;
  double absolute_tolerance = 1e-10;  // N
  int jobs = 1;
};

/// Newton failure or element inversion; names the step and the element with
/// the smallest det F at the last evaluated state.
class SolveError : public Error {
 public:
  SolveError(const std::string& what, std::size_t step, double time, std::size_t element)
      : Error(what), step(step), time(time), element(element) {}
  std::size_t step;
  double time;
  std::size_t element;
};

SolutionState solve_static(const FEModel& model, const SolverOptions& options = {});

/// Nodal displacements as a flat vector (x0, y0, z0, x1, ...).
Eigen::VectorXd flatten(const std::vector<Vec3>& u);

/// Element internal forces plus spring forces (N) at displacement `u` (mm).
Eigen::VectorXd internal_force(const FEModel& model, const Eigen::VectorXd& u);

/// Strain energy of elements and springs (N mm); its gradient is internal_force.
double total_strain_energy(const FEModel& model, const Eigen::VectorXd& u);

}  // namespace t2fe
