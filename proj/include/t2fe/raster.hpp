#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "t2fe/simd/kernels.hpp"
#include "t2fe/types.hpp"

namespace t2fe {

enum class VoxelUnit { milliseconds, arbitrary_signal };

std::string to_string(VoxelUnit unit);
VoxelUnit voxel_unit_from_string(const std::string& text);

/// Oriented raster volume.
///
/// World position of voxel (i, j, k) is `origin + direction * (spacing .* (i, j, k))`,
/// so `origin` is the centre of voxel (0, 0, 0) and the columns of
/// `direction` are the world axes of the index axes. Values are stored
/// x-fastest. A NaN value marks an invalid voxel.
struct VoxelGrid {
  Index3 dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};
  Mat3 direction = Mat3::Identity();
  std::vector<double> values;
  VoxelUnit unit = VoxelUnit::milliseconds;

  static VoxelGrid filled(const Index3& dims, const Vec3& spacing, double value,
                          VoxelUnit unit = VoxelUnit::milliseconds);

  std::size_t size() const {
    return static_cast<std::size_t>(dims[0] * dims[1] * dims[2]);
  }
  std::size_t linear(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return static_cast<std::size_t>((k * dims[1] + j) * dims[0] + i);
  }
  std::size_t linear(const Index3& idx) const { return linear(idx[0], idx[1], idx[2]); }
  bool in_bounds(const Index3& idx) const {
    return idx[0] >= 0 && idx[1] >= 0 && idx[2] >= 0 && idx[0] < dims[0] && idx[1] < dims[1] &&
           idx[2] < dims[2];
  }
  double at(const Index3& idx) const { return values[linear(idx)]; }

  bool same_geometry(const VoxelGrid& other) const;

  /// Throws InputError when an invariant is broken.
  void validate() const;
};

inline bool is_valid_voxel(double v) { return std::isfinite(v); }

struct IndexLookup {
  Index3 index;
  bool in_bounds;
};

Vec3 continuous_index(const VoxelGrid& grid, const Vec3& point);
Vec3 index_to_world(const VoxelGrid& grid, const Index3& index);

/// Rounds the continuous index half-up on every axis. Points outside the
/// volume still get the rounded index, with `in_bounds` cleared.
IndexLookup world_to_index(const VoxelGrid& grid, const Vec3& point);

struct EchoSeries {
  std::vector<double> echo_times_ms;
  std::vector<VoxelGrid> grids;

  void validate() const;
};

struct T2FitOptions {
  bool drop_first_echo = false;
  /// Gauss-Newton refinement of the log-linear estimate on the unweighted
  /// signal residual.
  bool refine = false;
  int refine_iterations = 20;
  int jobs = 1;
};

struct T2Fit {
  VoxelGrid t2;  // ms, NaN where the fit is invalid
  VoxelGrid s0;  // signal units, NaN where the fit is invalid
  std::size_t invalid_count = 0;
};

/// Mono-exponential S(TE) = S0 exp(-TE / T2) by least squares on ln S.
/// A voxel is invalid when any echo is nonpositive or nonfinite, when the
/// decay over the echo span is below 1e-12 (no measurable relaxation), or
/// when the fitted T2 is nonpositive or nonfinite.
T2Fit fit_t2(const EchoSeries& series, const T2FitOptions& options = {},
             const simd::KernelTable& kernels = simd::active_kernels());

struct DiffusionParams {
  int iterations = 5;
  double time_step = 0.125;
  double conductance = 3.0;
  int jobs = 1;
};

/// Largest time step for which the 6-neighbour update is a convex
/// combination of the centre and its neighbours.
inline constexpr double kMaxDiffusionTimeStep = 1.0 / 6.0;

/// Explicit Perona-Malik diffusion on the 6-neighbour stencil.
///
///   v_c <- v_c + dt * sum_faces (h_min / h_a)^2 * g(|v_n - v_c| / (h_a K)) * (v_n - v_c)
///
/// with g(x) = exp(-x^2). The conductance argument is the physical gradient
/// across the face; the face weights are normalised by the finest spacing so
/// the update stays a convex combination for dt <= 1/6 (discrete maximum
/// principle). Boundary faces and faces touching an invalid voxel carry no
/// flux; invalid voxels stay NaN.
VoxelGrid smooth_anisotropic_diffusion(const VoxelGrid& grid, const DiffusionParams& params = {},
                                       const simd::KernelTable& kernels = simd::active_kernels());

}  // namespace t2fe
