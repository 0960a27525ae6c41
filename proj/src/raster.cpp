#include "t2fe/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "t2fe/parallel.hpp"

namespace t2fe {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMinDecay = 1e-12;
constexpr std::size_t kFitChunk = 1 << 15;

}  // namespace

std::string to_string(VoxelUnit unit) {
  return unit == VoxelUnit::milliseconds ? "ms" : "arbitrary-signal";
}

VoxelUnit voxel_unit_from_string(const std::string& text) {
  if (text == "ms") return VoxelUnit::milliseconds;
  if (text == "arbitrary-signal") return VoxelUnit::arbitrary_signal;
  throw InputError("unknown voxel unit '" + text + "' (expected ms or arbitrary-signal)");
}

VoxelGrid VoxelGrid::filled(const Index3& dims, const Vec3& spacing, double value, VoxelUnit unit) {
  VoxelGrid g;
  g.dims = dims;
  g.spacing = spacing;
  g.unit = unit;
  g.values.assign(g.size(), value);
  return g;
}

bool VoxelGrid::same_geometry(const VoxelGrid& other) const {
  return dims == other.dims && spacing == other.spacing && origin == other.origin &&
         direction == other.direction;
}

void VoxelGrid::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) throw InputError("voxel grid dims must be positive");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
      throw InputError("voxel grid spacing must be strictly positive");
  }
  if (!origin.allFinite() || !direction.allFinite())
    throw InputError("voxel grid pose must be finite");
  const double orth = (direction.transpose() * direction - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (orth > 1e-9 || std::abs(std::abs(direction.determinant()) - 1.0) > 1e-9)
    throw InputError("voxel grid direction matrix is not orthonormal");
  if (values.size() != size())
    throw InputError("voxel grid holds " + std::to_string(values.size()) + " values, expected " +
                     std::to_string(size()));
}

Vec3 continuous_index(const VoxelGrid& grid, const Vec3& point) {
  return (grid.direction.transpose() * (point - grid.origin)).cwiseQuotient(grid.spacing);
}

Vec3 index_to_world(const VoxelGrid& grid, const Index3& index) {
  const Vec3 c(static_cast<double>(index[0]), static_cast<double>(index[1]),
               static_cast<double>(index[2]));
  return grid.origin + grid.direction * c.cwiseProduct(grid.spacing);
}

IndexLookup world_to_index(const VoxelGrid& grid, const Vec3& point) {
  const Vec3 c = continuous_index(grid, point);
  IndexLookup out{};
  for (int a = 0; a < 3; ++a) out.index[a] = static_cast<std::int64_t>(std::floor(c[a] + 0.5));
  out.in_bounds = grid.in_bounds(out.index);
  return out;
}

void EchoSeries::validate() const {
  if (grids.size() != echo_times_ms.size())
    throw InputError("echo series has " + std::to_string(grids.size()) + " volumes but " +
                     std::to_string(echo_times_ms.size()) + " echo times");
  if (grids.size() < 3) throw InputError("T2 fitting needs at least 3 echoes");
  for (std::size_t k = 0; k < grids.size(); ++k) {
    grids[k].validate();
    if (!std::isfinite(echo_times_ms[k])) throw InputError("echo times must be finite");
    if (k > 0) {
      if (!(echo_times_ms[k] > echo_times_ms[k - 1]))
        throw InputError("echo times must be strictly increasing");
      if (!grids[k].same_geometry(grids[0]))
        throw InputError("echo " + std::to_string(k) + " geometry differs from echo 0");
    }
  }
}

namespace {

// Gauss-Newton on r_k = S_k - S0 exp(-R2 t_k). Returns false when the
// iteration leaves the physical domain; the caller keeps the log-linear fit.
bool refine_voxel(std::span<const double> t, std::span<const double> s, int iterations, double& s0,
                  double& r2) {
  double a = s0, b = r2;
  for (int it = 0; it < iterations; ++it) {
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (std::size_t k = 0; k < t.size(); ++k) {
      const double e = std::exp(-b * t[k]);
      const Eigen::Vector2d jk(e, -a * t[k] * e);
      jtj += jk * jk.transpose();
      jtr += jk * (s[k] - a * e);
    }
    const Eigen::Vector2d step = jtj.ldlt().solve(jtr);
    if (!step.allFinite()) return false;
    a += step[0];
    b += step[1];
    if (!(a > 0.0) || !(b > 0.0)) return false;
    if (std::abs(step[1]) <= 1e-14 * std::abs(b) && std::abs(step[0]) <= 1e-14 * std::abs(a)) break;
  }
  s0 = a;
  r2 = b;
  return true;
}

}  // namespace

T2Fit fit_t2(const EchoSeries& series, const T2FitOptions& options,
             const simd::KernelTable& kernels) {
  series.validate();
  const std::size_t first = options.drop_first_echo ? 1 : 0;
  const std::size_t n_echo = series.grids.size() - first;
  if (n_echo < 3) throw InputError("fewer than 3 usable echoes after dropping the first echo");

  std::vector<double> times(series.echo_times_ms.begin() + static_cast<std::ptrdiff_t>(first),
                            series.echo_times_ms.end());
  double t_mean = 0.0;
  for (double t : times) t_mean += t;
  t_mean /= static_cast<double>(n_echo);
  double stt = 0.0;
  for (double t : times) stt += (t - t_mean) * (t - t_mean);
  std::vector<double> slope_w(n_echo), mean_w(n_echo, 1.0 / static_cast<double>(n_echo));
  for (std::size_t k = 0; k < n_echo; ++k) slope_w[k] = (times[k] - t_mean) / stt;
  const double span = times.back() - times.front();

  const VoxelGrid& ref = series.grids[0];
  T2Fit fit;
  fit.t2 = ref;
  fit.t2.unit = VoxelUnit::milliseconds;
  fit.s0 = ref;
  fit.s0.unit = VoxelUnit::arbitrary_signal;
  const std::size_t n = ref.size();
  const std::size_t n_chunks = (n + kFitChunk - 1) / kFitChunk;
  std::vector<std::size_t> invalid_per_chunk(n_chunks, 0);

  parallel_for(n_chunks, options.jobs, [&](std::size_t c_begin, std::size_t c_end) {
    std::vector<double> logs(n_echo * kFitChunk);
    std::vector<const double*> planes(n_echo);
    std::vector<double> slope(kFitChunk), mean_log(kFitChunk), signal(n_echo);
    std::vector<unsigned char> usable(kFitChunk);
    for (std::size_t c = c_begin; c < c_end; ++c) {
      const std::size_t begin = c * kFitChunk;
      const std::size_t len = std::min(kFitChunk, n - begin);
      for (std::size_t i = 0; i < len; ++i) usable[i] = 1;
      for (std::size_t k = 0; k < n_echo; ++k) {
        const std::vector<double>& src = series.grids[first + k].values;
        double* dst = logs.data() + k * kFitChunk;
        for (std::size_t i = 0; i < len; ++i) {
          const double s = src[begin + i];
          if (!(s > 0.0) || !std::isfinite(s)) {
            usable[i] = 0;
            dst[i] = 0.0;
          } else {
            dst[i] = std::log(s);
          }
        }
        planes[k] = dst;
      }
      kernels.linear_combination(planes, slope_w, slope.data(), len);
      kernels.linear_combination(planes, mean_w, mean_log.data(), len);
      std::size_t invalid = 0;
      for (std::size_t i = 0; i < len; ++i) {
        double t2 = kNaN, s0 = kNaN;
        if (usable[i] && -slope[i] * span >= kMinDecay) {
          double r2 = -slope[i];
          double a = std::exp(mean_log[i] + r2 * t_mean);
          if (options.refine) {
            for (std::size_t k = 0; k < n_echo; ++k)
              signal[k] = series.grids[first + k].values[begin + i];
            refine_voxel(times, signal, options.refine_iterations, a, r2);
          }
          t2 = 1.0 / r2;
          s0 = a;
          if (!std::isfinite(t2) || !(t2 > 0.0) || !std::isfinite(s0)) t2 = s0 = kNaN;
        }
        if (std::isnan(t2)) ++invalid;
        fit.t2.values[begin + i] = t2;
        fit.s0.values[begin + i] = s0;
      }
      invalid_per_chunk[c] = invalid;
    }
  });
  for (std::size_t v : invalid_per_chunk) fit.invalid_count += v;
  return fit;
}

VoxelGrid smooth_anisotropic_diffusion(const VoxelGrid& grid, const DiffusionParams& params,
                                       const simd::KernelTable& kernels) {
  grid.validate();
  if (params.iterations < 0) throw InputError("diffusion iterations must be nonnegative");
  if (!(params.time_step > 0.0))
    throw InputError("diffusion time step must be positive");
  if (params.time_step > kMaxDiffusionTimeStep)
    throw InputError("diffusion time step exceeds the 6-neighbour stability bound 1/6");
  if (!(params.conductance > 0.0)) throw InputError("diffusion conductance must be positive");

  VoxelGrid out = grid;
  if (params.iterations == 0) return out;

  const std::int64_t nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
  const std::int64_t px = nx + 2, py = ny + 2, pz = nz + 2;
  const std::size_t padded = static_cast<std::size_t>(px * py * pz);
  auto pidx = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    return static_cast<std::size_t>(((k + 1) * py + (j + 1)) * px + (i + 1));
  };

  std::vector<double> cur(padded, 0.0), next(padded, 0.0), mask(padded, 0.0);
  for (std::int64_t k = 0; k < nz; ++k)
    for (std::int64_t j = 0; j < ny; ++j)
      for (std::int64_t i = 0; i < nx; ++i) {
        const double v = grid.values[grid.linear(i, j, k)];
        if (is_valid_voxel(v)) {
          cur[pidx(i, j, k)] = v;
          mask[pidx(i, j, k)] = 1.0;
        }
      }

  const double h_min = grid.spacing.minCoeff();
  simd::DiffusionRow proto{};
  proto.count = static_cast<std::size_t>(nx);
  proto.stride_y = px;
  proto.stride_z = px * py;
  for (int a = 0; a < 3; ++a) {
    const double ratio = h_min / grid.spacing[a];
    proto.inv_hk[a] = 1.0 / (grid.spacing[a] * params.conductance);
    proto.weight[a] = params.time_step * (ratio * ratio);
  }

  const std::size_t rows = static_cast<std::size_t>(ny * nz);
  for (int it = 0; it < params.iterations; ++it) {
    parallel_for(rows, params.jobs, [&](std::size_t r_begin, std::size_t r_end) {
      for (std::size_t r = r_begin; r < r_end; ++r) {
        const auto j = static_cast<std::int64_t>(r) % ny;
        const auto k = static_cast<std::int64_t>(r) / ny;
        const std::size_t start = pidx(0, j, k);
        simd::DiffusionRow row = proto;
        row.u = cur.data() + start;
        row.mask = mask.data() + start;
        row.out = next.data() + start;
        kernels.diffusion_row(row);
      }
    });
    std::swap(cur, next);
  }

  for (std::int64_t k = 0; k < nz; ++k)
    for (std::int64_t j = 0; j < ny; ++j)
      for (std::int64_t i = 0; i < nx; ++i) {
        double& v = out.values[out.linear(i, j, k)];
        if (is_valid_voxel(v)) v = cur[pidx(i, j, k)];
      }
  return out;
}

}  // namespace t2fe
