#include "t2fe/fem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "t2fe/format.hpp"
#include "t2fe/parallel.hpp"

namespace t2fe {

// ---- constitutive law -------------------------------------------------------

namespace {

double checked_det(const Mat3& F) {
  const double j = F.determinant();
  if (!(j > 0.0)) throw GeometryError("deformation gradient with det F <= 0 (element inversion)");
  return j;
}

}  // namespace

double strain_energy_density(const Mat3& F, double mu, double lambda) {
  const double ln_j = std::log(checked_det(F));
  const double i1 = (F.transpose() * F).trace();
  return 0.5 * mu * (i1 - 3.0) - mu * ln_j + 0.5 * lambda * ln_j * ln_j;
}

Mat3 first_piola(const Mat3& F, double mu, double lambda) {
  const double ln_j = std::log(checked_det(F));
  const Mat3 f_inv_t = F.inverse().transpose();
  return mu * (F - f_inv_t) + lambda * ln_j * f_inv_t;
}

Mat3 cauchy_stress(const Mat3& F, double mu, double lambda) {
  const double j = checked_det(F);
  const Mat3 b = F * F.transpose();
  return (mu / j) * (b - Mat3::Identity()) + (lambda * std::log(j) / j) * Mat3::Identity();
}

Mat3 green_lagrange(const Mat3& F) { return 0.5 * (F.transpose() * F - Mat3::Identity()); }

Principal principal_and_shear(const Mat3& symmetric) {
  const Eigen::SelfAdjointEigenSolver<Mat3> es(symmetric, Eigen::EigenvaluesOnly);
  const Vec3 ev = es.eigenvalues();  // ascending
  Principal p;
  p.p1 = ev[2];
  p.p2 = ev[1];
  p.p3 = ev[0];
  p.tau_max = 0.5 * (p.p1 - p.p3);
  return p;
}

// ---- model ------------------------------------------------------------------

double Curve::at(double t) const {
  if (points.empty()) return 0.0;
  if (t <= points.front().first) return points.front().second;
  if (t >= points.back().first) return points.back().second;
  const auto hi = std::upper_bound(points.begin(), points.end(), t,
                                   [](double v, const auto& p) { return v < p.first; });
  const auto lo = hi - 1;
  const double s = (t - lo->first) / (hi->first - lo->first);
  return lo->second + s * (hi->second - lo->second);
}

void Curve::validate() const {
  if (points.empty()) throw InputError("load curve needs at least one point");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!std::isfinite(points[i].first) || !std::isfinite(points[i].second))
      throw InputError("load curve values must be finite");
    if (i > 0 && !(points[i].first > points[i - 1].first))
      throw InputError("load curve times must be strictly increasing");
  }
}

Curve Curve::ramp(double t_end) { return Curve{{{0.0, 0.0}, {t_end, 1.0}}}; }

namespace {

constexpr double kTimeTol = 1e-12;

bool same_time(double a, double b) { return std::abs(a - b) <= kTimeTol; }

}  // namespace

StepSchedule StepSchedule::standard(int ramp_steps, int stance_steps, std::vector<Marker> extra) {
  if (ramp_steps < 1 || stance_steps < 1)
    throw InputError("step schedule needs at least one ramp and one stance step");
  StepSchedule s;
  for (int i = 1; i < ramp_steps; ++i) s.times.push_back(kRampEnd * i / ramp_steps);
  s.times.push_back(kRampEnd);
  for (int i = 1; i < stance_steps; ++i)
    s.times.push_back(kRampEnd + (1.0 - kRampEnd) * i / stance_steps);
  s.times.push_back(1.0);
  s.markers.push_back({"ramp-end", kRampEnd});
  for (Marker& m : extra) {
    if (m.name == "ramp-end") continue;
    const bool present =
        std::any_of(s.times.begin(), s.times.end(), [&](double t) { return same_time(t, m.time); });
    if (!present && m.time > 0.0 && m.time <= 1.0) {
      s.times.push_back(m.time);
      std::sort(s.times.begin(), s.times.end());
    }
    s.markers.push_back(std::move(m));
  }
  s.validate();
  return s;
}

void StepSchedule::validate() const {
  if (times.empty()) throw InputError("step schedule is empty");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] > 0.0 && times[i] <= 1.0))
      throw InputError("step times must lie in (0, 1]");
    if (i > 0 && !(times[i] > times[i - 1]))
      throw InputError("step times must be strictly increasing");
  }
  if (std::none_of(times.begin(), times.end(), [](double t) { return same_time(t, kRampEnd); }))
    throw InputError("step schedule must contain the ramp end t = 0.1");
  std::set<std::string> names;
  for (const Marker& m : markers) {
    if (!names.insert(m.name).second) throw InputError("duplicate marker '" + m.name + "'");
    if (std::none_of(times.begin(), times.end(), [&](double t) { return same_time(t, m.time); }))
      throw InputError("marker '" + m.name + "' at t = " + format_number(m.time) +
                       " does not coincide with a step");
  }
}

std::size_t StepSchedule::step_of(const std::string& marker) const {
  for (const Marker& m : markers)
    if (m.name == marker)
      for (std::size_t i = 0; i < times.size(); ++i)
        if (same_time(times[i], m.time)) return i;
  throw InputError("unknown schedule marker '" + marker + "'");
}

void FEModel::validate() const {
  mesh.validate();
  const std::size_t ne = mesh.element_count();
  if (materials.size() != ne)
    throw InputError("model has " + std::to_string(materials.size()) + " material entries for " +
                     std::to_string(ne) + " elements");
  for (std::size_t e = 0; e < ne; ++e) {
    const ElasticConstants& c = materials[e];
    if (!(c.mu > 0.0) || !(c.lambda > 0.0) || !std::isfinite(c.mu) || !std::isfinite(c.lambda))
      throw InputError("element " + std::to_string(e) + " has nonpositive moduli");
  }
  auto check_set = [&](const std::string& name) {
    if (!mesh.node_sets.count(name)) throw InputError("unknown node set '" + name + "'");
  };
  for (const FixedBC& f : fixed) check_set(f.node_set);
  for (const PrescribedDisplacement& p : prescribed) {
    check_set(p.node_set);
    if (p.dof < 0 || p.dof > 2) throw InputError("prescribed dof must be 0, 1 or 2");
    if (!std::isfinite(p.value_mm)) throw InputError("prescribed displacement must be finite");
    p.curve.validate();
  }
  for (const NodalLoad& l : loads) {
    check_set(l.node_set);
    if (!l.force_n.allFinite()) throw InputError("nodal load must be finite");
    l.curve.validate();
  }
  for (const Spring& s : springs) {
    if (s.node < 0 || static_cast<std::size_t>(s.node) >= mesh.node_count())
      throw InputError("spring references missing node " + std::to_string(s.node));
    if (!(s.stiffness >= 0.0) || !std::isfinite(s.stiffness))
      throw InputError("spring stiffness must be nonnegative");
    if (s.direction && !(s.direction->norm() > 0.0))
      throw InputError("spring direction must be nonzero");
  }
  if (fixed.empty() && prescribed.empty() && springs.empty())
    throw InputError("model has no supports; rigid-body motion is unconstrained");
  schedule.validate();
  const auto bad = check_jacobians(mesh);
  if (!bad.empty())
    throw GeometryError("element " + std::to_string(bad.front()) +
                        " has a nonpositive corner Jacobian");
}

std::vector<ElasticConstants> assign_materials(const HexMesh& mesh, const ElementField& e_d,
                                               const MaterialAssignment& rule) {
  e_d.validate(mesh.element_count());
  std::vector<ElasticConstants> out(mesh.element_count());
  for (std::size_t e = 0; e < out.size(); ++e) {
    const auto it = std::find_if(rule.homogeneous.begin(), rule.homogeneous.end(),
                                 [&](const auto& h) { return h.first == mesh.parts[e]; });
    out[e] = it != rule.homogeneous.end() ? it->second
                                          : lame_from_young_poisson(e_d.values[e], rule.field_poisson);
  }
  return out;
}

const StepResult& SolutionState::at_marker(const StepSchedule& schedule,
                                           const std::string& marker) const {
  const std::size_t i = schedule.step_of(marker);
  if (i >= steps.size()) throw Error("no solution stored for marker '" + marker + "'");
  return steps[i];
}

Eigen::VectorXd flatten(const std::vector<Vec3>& u) {
  Eigen::VectorXd out(3 * static_cast<Eigen::Index>(u.size()));
  for (std::size_t i = 0; i < u.size(); ++i) out.segment<3>(3 * static_cast<Eigen::Index>(i)) = u[i];
  return out;
}

// ---- element kernel ---------------------------------------------------------

namespace {

constexpr double kPaToMPa = 1e-6;
constexpr std::size_t kAssemblyChunk = 256;

using Vec24 = Eigen::Matrix<double, 24, 1>;
using Mat24 = Eigen::Matrix<double, 24, 24>;
using NodeMat = Eigen::Matrix<double, 8, 3>;

struct GaussData {
  NodeMat dndx;  // dN_a / dX_J
  double dv;     // det J * weight
};
using ElementGeo = std::array<GaussData, 8>;

ElementGeo reference_geometry(const hex8::Corners& x, std::size_t e) {
  ElementGeo g;
  const auto& pts = hex8::gauss_points();
  for (int q = 0; q < 8; ++q) {
    const hex8::ShapeGrad dn = hex8::shape_grad(pts[q]);
    const Mat3 j = hex8::jacobian(x, dn);
    const double det = j.determinant();
    if (!(det > 0.0))
      throw GeometryError("element " + std::to_string(e) + " has a nonpositive Jacobian");
    g[q].dndx = dn * j.inverse();
    g[q].dv = det;
  }
  return g;
}

enum Need : unsigned { kForce = 1, kTangent = 2, kEnergy = 4, kFields = 8 };

struct ElementOut {
  Vec24 f;
  Mat24 k;
  double energy;
  double min_det;
  Mat3 stress;  // MPa
  Mat3 strain;
  bool ok;
};

constexpr int kVoigt[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {1, 2}, {0, 2}};

void element_eval(const ElementGeo& g, const NodeMat& ue, double mu, double lam, unsigned need,
                  ElementOut& out) {
  out.f.setZero();
  if (need & kTangent) out.k.setZero();
  out.energy = 0.0;
  out.min_det = std::numeric_limits<double>::infinity();
  out.stress.setZero();
  out.strain.setZero();
  out.ok = true;
  double vol = 0.0;
  const Mat3 id = Mat3::Identity();
  for (const GaussData& gp : g) {
    const Mat3 F = id + ue.transpose() * gp.dndx;
    const double j = F.determinant();
    out.min_det = std::min(out.min_det, j);
    if (!(j > 0.0)) {
      out.ok = false;
      continue;
    }
    if (!out.ok) continue;
    const Mat3 c = F.transpose() * F;
    const Mat3 ci = c.inverse();
    const double ln_j = std::log(j);
    const Mat3 s = mu * (id - ci) + lam * ln_j * ci;
    if (need & kForce) {
      const Mat3 p = F * s;
      for (int a = 0; a < 8; ++a)
        out.f.segment<3>(3 * a) += p * gp.dndx.row(a).transpose() * gp.dv;
    }
    if (need & kEnergy)
      out.energy += (0.5 * mu * (c.trace() - 3.0) - mu * ln_j + 0.5 * lam * ln_j * ln_j) * gp.dv;
    if (need & kFields) {
      out.stress += (F * s * F.transpose() / j) * gp.dv;
      out.strain += 0.5 * (c - id) * gp.dv;
      vol += gp.dv;
    }
    if (need & kTangent) {
      const NodeMat sd = gp.dndx * s;  // row a: (S dN_a)^T
      const Eigen::Matrix<double, 8, 8> geo = sd * gp.dndx.transpose() * gp.dv;
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) out.k.block<3, 3>(3 * a, 3 * b).diagonal().array() += geo(a, b);

      Eigen::Matrix<double, 6, 6> d;
      const double m2 = mu - lam * ln_j;
      for (int p = 0; p < 6; ++p)
        for (int q = 0; q < 6; ++q) {
          const int I = kVoigt[p][0], J = kVoigt[p][1], K = kVoigt[q][0], L = kVoigt[q][1];
          d(p, q) = lam * ci(I, J) * ci(K, L) + m2 * (ci(I, K) * ci(J, L) + ci(I, L) * ci(J, K));
        }
      Eigen::Matrix<double, 6, 24> b;
      for (int a = 0; a < 8; ++a)
        for (int i = 0; i < 3; ++i) {
          const int col = 3 * a + i;
          const double d0 = gp.dndx(a, 0), d1 = gp.dndx(a, 1), d2 = gp.dndx(a, 2);
          b(0, col) = F(i, 0) * d0;
          b(1, col) = F(i, 1) * d1;
          b(2, col) = F(i, 2) * d2;
          b(3, col) = F(i, 0) * d1 + F(i, 1) * d0;
          b(4, col) = F(i, 1) * d2 + F(i, 2) * d1;
          b(5, col) = F(i, 0) * d2 + F(i, 2) * d0;
        }
      out.k.noalias() += b.transpose() * (d * b) * gp.dv;
    }
  }
  if ((need & kFields) && out.ok) {
    out.stress /= vol;
    out.strain /= vol;
  }
}

/// Element geometry, materials (MPa) and springs shared by the solver and
/// the energy/force probes.
class Assembler {
 public:
  explicit Assembler(const FEModel& m, int jobs = 1) : model_(m), jobs_(jobs) {
    const std::size_t ne = m.mesh.element_count();
    geo_.resize(ne);
    mu_.resize(ne);
    lam_.resize(ne);
    for (std::size_t e = 0; e < ne; ++e) {
      geo_[e] = reference_geometry(m.mesh.corners(e), e);
      mu_[e] = m.materials[e].mu * kPaToMPa;
      lam_[e] = m.materials[e].lambda * kPaToMPa;
    }
  }

  std::size_t dofs() const { return 3 * model_.mesh.node_count(); }

  struct Result {
    Eigen::VectorXd force;  // internal + spring, N
    std::vector<Eigen::Triplet<double>> triplets;
    double energy = 0.0;
    std::vector<Mat3> stress, strain;  // Pa / dimensionless
    bool ok = true;
    std::size_t worst_element = 0;
    double min_det = std::numeric_limits<double>::infinity();
  };

  void evaluate(const Eigen::VectorXd& u, unsigned need, Result& r) const {
    const std::size_t ne = model_.mesh.element_count();
    r.force = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dofs()));
    r.triplets.clear();
    if (need & kTangent) r.triplets.reserve(ne * 576 + model_.springs.size() * 9);
    r.energy = 0.0;
    r.ok = true;
    r.min_det = std::numeric_limits<double>::infinity();
    r.worst_element = 0;
    if (need & kFields) {
      r.stress.assign(ne, Mat3::Zero());
      r.strain.assign(ne, Mat3::Zero());
    }
    std::vector<ElementOut> outs(std::min(kAssemblyChunk, ne));
    for (std::size_t base = 0; base < ne; base += kAssemblyChunk) {
      const std::size_t count = std::min(kAssemblyChunk, ne - base);
      parallel_for(count, jobs_, [&](std::size_t b, std::size_t end) {
        for (std::size_t i = b; i < end; ++i) {
          const std::size_t e = base + i;
          NodeMat ue;
          for (int a = 0; a < 8; ++a)
            ue.row(a) = u.segment<3>(3 * model_.mesh.elements[e][a]).transpose();
          element_eval(geo_[e], ue, mu_[e], lam_[e], need, outs[i]);
        }
      });
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t e = base + i;
        const ElementOut& o = outs[i];
        if (o.min_det < r.min_det) {
          r.min_det = o.min_det;
          r.worst_element = e;
        }
        if (!o.ok) {
          r.ok = false;
          continue;
        }
        const auto& conn = model_.mesh.elements[e];
        for (int a = 0; a < 8; ++a) r.force.segment<3>(3 * conn[a]) += o.f.segment<3>(3 * a);
        r.energy += o.energy;
        if (need & kFields) {
          r.stress[e] = o.stress / kPaToMPa;
          r.strain[e] = o.strain;
        }
        if (need & kTangent)
          for (int a = 0; a < 8; ++a)
            for (int b = 0; b < 8; ++b)
              for (int i2 = 0; i2 < 3; ++i2)
                for (int j2 = 0; j2 < 3; ++j2)
                  r.triplets.emplace_back(3 * conn[a] + i2, 3 * conn[b] + j2,
                                          o.k(3 * a + i2, 3 * b + j2));
      }
    }
    for (const Spring& s : model_.springs) {
      const Mat3 k = spring_matrix(s);
      const Vec3 un = u.segment<3>(3 * s.node);
      r.force.segment<3>(3 * s.node) += k * un;
      r.energy += 0.5 * un.dot(k * un);
      if (need & kTangent)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) r.triplets.emplace_back(3 * s.node + i, 3 * s.node + j, k(i, j));
    }
  }

  static Mat3 spring_matrix(const Spring& s) {
    if (!s.direction) return s.stiffness * Mat3::Identity();
    const Vec3 n = s.direction->normalized();
    return s.stiffness * (n * n.transpose());
  }

 private:
  const FEModel& model_;
  int jobs_;
  std::vector<ElementGeo> geo_;
  std::vector<double> mu_, lam_;
};

// ---- Newton solver ----------------------------------------------------------

using SpMat = Eigen::SparseMatrix<double>;

bool sparse_solve(const SpMat& k, const Eigen::VectorXd& rhs, Eigen::VectorXd& x) {
  if (k.rows() == 0) {
    x.resize(0);
    return true;
  }
  const double rhs_norm = rhs.norm();
  Eigen::SimplicialLDLT<SpMat> ldlt(k);
  if (ldlt.info() == Eigen::Success) {
    x = ldlt.solve(rhs);
    if (ldlt.info() == Eigen::Success && x.allFinite() &&
        (k * x - rhs).norm() <= 1e-9 * std::max(rhs_norm, 1e-300))
      return true;
  }
  Eigen::SparseLU<SpMat> lu;
  lu.analyzePattern(k);
  lu.factorize(k);
  if (lu.info() != Eigen::Success) return false;
  x = lu.solve(rhs);
  return lu.info() == Eigen::Success && x.allFinite();
}

class Solver {
 public:
  Solver(const FEModel& m, const SolverOptions& o) : model_(m), opt_(o), asm_(m, o.jobs) {
    const std::size_t n = asm_.dofs();
    kind_.assign(n, -1);  // -1 free, -2 fixed, >=0 prescribed index
    for (const FixedBC& f : m.fixed)
      for (int node : m.mesh.node_sets.at(f.node_set))
        for (int d = 0; d < 3; ++d)
          if (f.dofs[d]) constrain(3 * static_cast<std::size_t>(node) + d, -2);
    for (std::size_t p = 0; p < m.prescribed.size(); ++p)
      for (int node : m.mesh.node_sets.at(m.prescribed[p].node_set))
        constrain(3 * static_cast<std::size_t>(node) + m.prescribed[p].dof, static_cast<int>(p));
    slot_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (kind_[i] == -1) {
        slot_[i] = free_.size();
        free_.push_back(i);
      } else {
        slot_[i] = cons_.size();
        cons_.push_back(i);
      }
    }
  }

  SolutionState run() {
    SolutionState state;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(asm_.dofs()));
    double t_prev = 0.0;
    const auto& times = model_.schedule.times;
    for (std::size_t s = 0; s < times.size(); ++s) {
      Stats stats;
      if (!solve_interval(u, t_prev, times[s], 0, stats)) {
        char msg[256];
        std::snprintf(msg, sizeof msg,
                      "step %zu (t = %g) failed to converge after %d bisections; worst element %zu "
                      "(min det F = %.6g)",
                      s, times[s], opt_.max_bisections, last_worst_, last_min_det_);
        throw SolveError(msg, s, times[s], last_worst_);
      }
      Assembler::Result fields;
      asm_.evaluate(u, kFields, fields);
      StepResult r;
      r.time = times[s];
      r.displacement.resize(model_.mesh.node_count());
      for (std::size_t i = 0; i < r.displacement.size(); ++i)
        r.displacement[i] = u.segment<3>(3 * static_cast<Eigen::Index>(i));
      r.stress = std::move(fields.stress);
      r.strain = std::move(fields.strain);
      r.iterations = stats.iterations;
      r.substeps = stats.substeps;
      r.residual_norm = stats.residual;
      state.steps.push_back(std::move(r));
      t_prev = times[s];
    }
    return state;
  }

 private:
  struct Stats {
    int iterations = 0;
    int substeps = 0;
    double residual = 0.0;
  };

  struct Eval {
    Assembler::Result a;
    Eigen::VectorXd r_free;
    double reaction_norm = 0.0;
    SpMat kff, kfp;
  };

  void constrain(std::size_t dof, int kind) {
    if (kind_[dof] != -1)
      throw InputError("degree of freedom " + std::to_string(dof / 3) + "." +
                       std::to_string(dof % 3) + " is constrained twice");
    kind_[dof] = kind;
  }

  Eigen::VectorXd constrained_values(double t) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(cons_.size()));
    for (std::size_t i = 0; i < cons_.size(); ++i) {
      const int k = kind_[cons_[i]];
      v[static_cast<Eigen::Index>(i)] =
          k < 0 ? 0.0 : model_.prescribed[k].value_mm * model_.prescribed[k].curve.at(t);
    }
    return v;
  }

  Eigen::VectorXd external_force(double t) const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(asm_.dofs()));
    for (const NodalLoad& l : model_.loads) {
      const Vec3 v = l.force_n * l.curve.at(t);
      for (int node : model_.mesh.node_sets.at(l.node_set)) f.segment<3>(3 * node) += v;
    }
    return f;
  }

  bool evaluate(const Eigen::VectorXd& u, const Eigen::VectorXd& f_ext, Eval& ev) {
    asm_.evaluate(u, kForce | kTangent, ev.a);
    last_worst_ = ev.a.worst_element;
    last_min_det_ = ev.a.min_det;
    if (!ev.a.ok) return false;
    const Eigen::VectorXd r = ev.a.force - f_ext;
    ev.r_free.resize(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t i = 0; i < free_.size(); ++i) ev.r_free[static_cast<Eigen::Index>(i)] = r[static_cast<Eigen::Index>(free_[i])];
    double reaction = 0.0;
    for (std::size_t d : cons_) reaction += r[static_cast<Eigen::Index>(d)] * r[static_cast<Eigen::Index>(d)];
    ev.reaction_norm = std::sqrt(reaction);
    std::vector<Eigen::Triplet<double>> ff, fp;
    ff.reserve(ev.a.triplets.size());
    for (const auto& t : ev.a.triplets) {
      const auto row = static_cast<std::size_t>(t.row()), col = static_cast<std::size_t>(t.col());
      if (kind_[row] != -1) continue;
      if (kind_[col] == -1)
        ff.emplace_back(static_cast<int>(slot_[row]), static_cast<int>(slot_[col]), t.value());
      else
        fp.emplace_back(static_cast<int>(slot_[row]), static_cast<int>(slot_[col]), t.value());
    }
    ev.kff.resize(static_cast<Eigen::Index>(free_.size()), static_cast<Eigen::Index>(free_.size()));
    ev.kff.setFromTriplets(ff.begin(), ff.end());
    ev.kfp.resize(static_cast<Eigen::Index>(free_.size()), static_cast<Eigen::Index>(cons_.size()));
    ev.kfp.setFromTriplets(fp.begin(), fp.end());
    return true;
  }

  void add_free(Eigen::VectorXd& u, const Eigen::VectorXd& delta, double alpha) const {
    for (std::size_t i = 0; i < free_.size(); ++i)
      u[static_cast<Eigen::Index>(free_[i])] += alpha * delta[static_cast<Eigen::Index>(i)];
  }

  void set_constrained(Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    for (std::size_t i = 0; i < cons_.size(); ++i)
      u[static_cast<Eigen::Index>(cons_[i])] = v[static_cast<Eigen::Index>(i)];
  }

  /// Newton iterations from the converged state `u` at t0 to t1.
  bool try_increment(const Eigen::VectorXd& u0, double t0, double t1, Eigen::VectorXd& u,
                     Stats& stats) {
    const Eigen::VectorXd f_ext = external_force(t1);
    const double f_ext_norm = f_ext.norm();
    const Eigen::VectorXd up1 = constrained_values(t1);
    const Eigen::VectorXd dup = up1 - constrained_values(t0);

    // Predictor: linearised response to the new loads and boundary motion.
    Eval ev;
    if (!evaluate(u0, f_ext, ev)) return false;
    Eigen::VectorXd delta;
    if (!sparse_solve(ev.kff, -ev.r_free - ev.kfp * dup, delta)) return false;
    u = u0;
    add_free(u, delta, 1.0);
    set_constrained(u, up1);
    if (!evaluate(u, f_ext, ev)) {
      // Fall back to moving only the boundary.
      u = u0;
      set_constrained(u, up1);
      if (!evaluate(u, f_ext, ev)) return false;
    }

    for (int it = 0;; ++it) {
      const double norm = ev.r_free.norm();
      if (norm <= opt_.relative_tolerance * (f_ext_norm + ev.reaction_norm) ||
          norm <= opt_.absolute_tolerance) {
        stats.iterations += it;
        stats.residual = norm;
        return true;
      }
      if (it >= opt_.max_iterations) return false;
      if (!sparse_solve(ev.kff, -ev.r_free, delta)) return false;
      bool accepted = false;
      Eval trial;
      for (double alpha = 1.0; alpha >= 1.0 / 256.0; alpha *= 0.5) {
        Eigen::VectorXd u_try = u;
        add_free(u_try, delta, alpha);
        if (evaluate(u_try, f_ext, trial) && trial.r_free.norm() < norm) {
          u = std::move(u_try);
          std::swap(ev, trial);
          accepted = true;
          break;
        }
      }
      if (!accepted) return false;
    }
  }

  bool solve_interval(Eigen::VectorXd& u, double t0, double t1, int depth, Stats& stats) {
    Eigen::VectorXd trial;
    if (try_increment(u, t0, t1, trial, stats)) {
      u = std::move(trial);
      ++stats.substeps;
      return true;
    }
    if (depth >= opt_.max_bisections) return false;
    const double tm = 0.5 * (t0 + t1);
    const Eigen::VectorXd saved = u;
    if (!solve_interval(u, t0, tm, depth + 1, stats) || !solve_interval(u, tm, t1, depth + 1, stats)) {
      u = saved;
      return false;
    }
    return true;
  }

  const FEModel& model_;
  SolverOptions opt_;
  Assembler asm_;
  std::vector<int> kind_;
  std::vector<std::size_t> slot_, free_, cons_;
  std::size_t last_worst_ = 0;
  double last_min_det_ = 0.0;
};

}  // namespace

SolutionState solve_static(const FEModel& model, const SolverOptions& options) {
  model.validate();
  if (options.max_iterations < 1 || options.max_bisections < 0)
    throw InputError("solver iteration limits must be positive");
  Solver solver(model, options);
  return solver.run();
}

Eigen::VectorXd internal_force(const FEModel& model, const Eigen::VectorXd& u) {
  const Assembler a(model);
  if (u.size() != static_cast<Eigen::Index>(a.dofs()))
    throw InputError("displacement vector has the wrong length");
  Assembler::Result r;
  a.evaluate(u, kForce, r);
  if (!r.ok) throw GeometryError("element " + std::to_string(r.worst_element) + " is inverted");
  return r.force;
}

double total_strain_energy(const FEModel& model, const Eigen::VectorXd& u) {
  const Assembler a(model);
  if (u.size() != static_cast<Eigen::Index>(a.dofs()))
    throw InputError("displacement vector has the wrong length");
  Assembler::Result r;
  a.evaluate(u, kEnergy, r);
  if (!r.ok) throw GeometryError("element " + std::to_string(r.worst_element) + " is inverted");
  return r.energy;
}

}  // namespace t2fe
