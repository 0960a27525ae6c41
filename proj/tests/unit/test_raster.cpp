#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "t2fe/mesh.hpp"
#include "t2fe/raster.hpp"
#include "t2fe/volume_io.hpp"

using namespace t2fe;

namespace {

EchoSeries synthetic_series(double t2, double s0, const std::vector<double>& times) {
  EchoSeries s;
  s.echo_times_ms = times;
  for (double te : times) {
    VoxelGrid g = VoxelGrid::filled({2, 2, 1}, Vec3::Ones(), s0 * std::exp(-te / t2),
                                    VoxelUnit::arbitrary_signal);
    s.grids.push_back(g);
  }
  return s;
}

// Straightforward reading of the documented update rule; independent of the
// row kernels and padded buffers of the library.
VoxelGrid reference_diffusion(const VoxelGrid& in, const DiffusionParams& p) {
  VoxelGrid cur = in;
  const double hmin = in.spacing.minCoeff();
  const std::int64_t off[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  for (int it = 0; it < p.iterations; ++it) {
    VoxelGrid next = cur;
    for (std::int64_t k = 0; k < in.dims[2]; ++k)
      for (std::int64_t j = 0; j < in.dims[1]; ++j)
        for (std::int64_t i = 0; i < in.dims[0]; ++i) {
          const double c = cur.at({i, j, k});
          if (!std::isfinite(c)) continue;
          double acc = 0.0;
          for (const auto& o : off) {
            const Index3 n{i + o[0], j + o[1], k + o[2]};
            if (!cur.in_bounds(n) || !std::isfinite(cur.at(n))) continue;
            const int a = o[0] != 0 ? 0 : (o[1] != 0 ? 1 : 2);
            const double h = in.spacing[a];
            const double d = cur.at(n) - c;
            const double x = d / (h * p.conductance);
            acc += (hmin / h) * (hmin / h) * std::exp(-x * x) * d;
          }
          next.values[next.linear(i, j, k)] = c + p.time_step * acc;
        }
    cur = next;
  }
  return cur;
}

}  // namespace

TEST(T2Fit, RecoversNoiselessDecay) {
  const EchoSeries s = synthetic_series(40.0, 1000.0, {10, 20, 30, 40, 50, 60});
  const T2Fit fit = fit_t2(s);
  for (double v : fit.t2.values) EXPECT_NEAR(v, 40.0, 1e-9);
  for (double v : fit.s0.values) EXPECT_NEAR(v, 1000.0, 1e-7);
  EXPECT_EQ(fit.invalid_count, 0u);
  EXPECT_EQ(fit.t2.unit, VoxelUnit::milliseconds);
}

TEST(T2Fit, MarksNonDecayingAndNonpositiveVoxelsInvalid) {
  EchoSeries s = synthetic_series(40.0, 1000.0, {10, 20, 30, 40});
  for (auto& g : s.grids) {
    g.values[1] = 500.0;  // flat signal: no measurable decay
    g.values[2] = 0.0;    // background
  }
  s.grids[2].values[3] = -1.0;
  const T2Fit fit = fit_t2(s);
  EXPECT_NEAR(fit.t2.values[0], 40.0, 1e-9);
  EXPECT_TRUE(std::isnan(fit.t2.values[1]));
  EXPECT_TRUE(std::isnan(fit.t2.values[2]));
  EXPECT_TRUE(std::isnan(fit.t2.values[3]));
  EXPECT_EQ(fit.invalid_count, 3u);
}

TEST(T2Fit, DropFirstEchoAndRefinement) {
  EchoSeries s = synthetic_series(30.0, 800.0, {8, 16, 24, 32, 40});
  for (double& v : s.grids[0].values) v *= 0.7;  // stimulated-echo bias on echo 1
  T2FitOptions opt;
  opt.drop_first_echo = true;
  EXPECT_NEAR(fit_t2(s, opt).t2.values[0], 30.0, 1e-9);
  opt.refine = true;
  EXPECT_NEAR(fit_t2(s, opt).t2.values[0], 30.0, 1e-9);
  opt.drop_first_echo = false;
  opt.refine = false;
  EXPECT_GT(fit_t2(s, opt).t2.values[0], 30.5);
}

TEST(T2Fit, RejectsBadSeries) {
  EXPECT_THROW(fit_t2(synthetic_series(40, 1000, {10, 20})), InputError);
  EXPECT_THROW(fit_t2(synthetic_series(40, 1000, {10, 30, 20})), InputError);
  EchoSeries s = synthetic_series(40, 1000, {10, 20, 30});
  s.grids[1].spacing = Vec3(2, 1, 1);
  EXPECT_THROW(fit_t2(s), InputError);
  EXPECT_THROW(fit_t2(synthetic_series(40, 1000, {10, 20, 30}), {true}), InputError);
}

TEST(Diffusion, MatchesReferenceOnAnisotropicStep) {
  VoxelGrid g = VoxelGrid::filled({9, 5, 4}, Vec3(0.3125, 0.3125, 1.5), 30.0);
  for (std::int64_t k = 0; k < 4; ++k)
    for (std::int64_t j = 0; j < 5; ++j)
      for (std::int64_t i = 0; i < 9; ++i)
        g.values[g.linear(i, j, k)] = (i < 4 ? 30.0 : 50.0) + 2.0 * k + 0.5 * j;
  g.values[g.linear(2, 2, 1)] = std::numeric_limits<double>::quiet_NaN();
  DiffusionParams p;
  p.iterations = 4;
  const VoxelGrid ref = reference_diffusion(g, p);
  for (const auto* k : {&simd::scalar_kernels(), simd::avx2_kernels()}) {
    if (k == nullptr || (k->isa == simd::Isa::avx2 && !simd::cpu_has_avx2())) continue;
    const VoxelGrid out = smooth_anisotropic_diffusion(g, p, *k);
    for (std::size_t v = 0; v < g.size(); ++v) {
      if (std::isnan(ref.values[v])) {
        EXPECT_TRUE(std::isnan(out.values[v]));
      } else {
        EXPECT_NEAR(out.values[v], ref.values[v], 1e-12) << v;
      }
    }
  }
}

TEST(Diffusion, PreservesConstantsAndRespectsMaximumPrinciple) {
  VoxelGrid flat = VoxelGrid::filled({5, 5, 5}, Vec3(1, 1, 2), 42.0);
  const VoxelGrid f = smooth_anisotropic_diffusion(flat);
  for (double v : f.values) EXPECT_EQ(v, 42.0);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(20.0, 80.0);
  VoxelGrid noisy = VoxelGrid::filled({8, 8, 3}, Vec3(0.5, 0.5, 3.0), 0.0);
  for (double& v : noisy.values) v = u(rng);
  DiffusionParams p;
  p.time_step = kMaxDiffusionTimeStep;
  p.iterations = 20;
  p.conductance = 100.0;
  const VoxelGrid s = smooth_anisotropic_diffusion(noisy, p);
  const auto [lo, hi] = std::minmax_element(noisy.values.begin(), noisy.values.end());
  for (double v : s.values) {
    EXPECT_GE(v, *lo);
    EXPECT_LE(v, *hi);
  }
}

TEST(Diffusion, RejectsUnstableParameters) {
  const VoxelGrid g = VoxelGrid::filled({3, 3, 3}, Vec3::Ones(), 1.0);
  EXPECT_THROW(smooth_anisotropic_diffusion(g, {5, 0.2, 3.0, 1}), InputError);
  EXPECT_THROW(smooth_anisotropic_diffusion(g, {5, 0.1, 0.0, 1}), InputError);
  EXPECT_THROW(smooth_anisotropic_diffusion(g, {-1, 0.1, 3.0, 1}), InputError);
}

TEST(VoxelGridIndex, WorldToIndexRoundsHalfUp) {
  VoxelGrid g = VoxelGrid::filled({4, 4, 4}, Vec3(0.5, 0.5, 2.0), 0.0);
  g.origin = Vec3(10, 20, 30);
  auto r = world_to_index(g, Vec3(10.25, 20.0, 31.0));
  EXPECT_EQ(r.index, (Index3{1, 0, 1}));
  EXPECT_TRUE(r.in_bounds);
  r = world_to_index(g, Vec3(10.2499, 19.76, 30.99));
  EXPECT_EQ(r.index, (Index3{0, 0, 0}));
  r = world_to_index(g, Vec3(9.0, 20.0, 30.0));
  EXPECT_FALSE(r.in_bounds);
  EXPECT_EQ(r.index[0], -2);

  // Rotated grid: index axis 0 points along world +y.
  g.direction << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Vec3 w = index_to_world(g, {3, 1, 2});
  EXPECT_EQ(world_to_index(g, w).index, (Index3{3, 1, 2}));
  EXPECT_NEAR(w.y(), 20.0 + 1.5, 1e-12);
}

TEST(VoxelGridIndex, ValidateCatchesBrokenGrids) {
  VoxelGrid g = VoxelGrid::filled({2, 2, 2}, Vec3::Ones(), 0.0);
  g.spacing[1] = 0.0;
  EXPECT_THROW(g.validate(), InputError);
  g.spacing[1] = 1.0;
  g.values.pop_back();
  EXPECT_THROW(g.validate(), InputError);
  g.values.push_back(0.0);
  g.direction(0, 1) = 0.3;
  EXPECT_THROW(g.validate(), InputError);
}

TEST(VolumeIO, RoundTripsFloat32WithNaN) {
  const auto dir = std::filesystem::temp_directory_path() / "t2fe_volume_io_test";
  std::filesystem::create_directories(dir);
  VoxelGrid g = VoxelGrid::filled({3, 2, 2}, Vec3(0.3125, 0.3125, 3.48), 0.0);
  g.origin = Vec3(-1.5, 2.25, 7.0);
  g.direction << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = 20.0 + 1.25 * static_cast<double>(i);
  g.values[4] = std::numeric_limits<double>::quiet_NaN();
  write_volume(dir / "v.json", g, 12.5);
  const VolumeFile f = read_volume(dir / "v.json");
  EXPECT_TRUE(f.grid.same_geometry(g));
  ASSERT_TRUE(f.echo_time_ms.has_value());
  EXPECT_EQ(*f.echo_time_ms, 12.5);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i == 4)
      EXPECT_TRUE(std::isnan(f.grid.values[i]));
    else
      EXPECT_EQ(f.grid.values[i], static_cast<double>(static_cast<float>(g.values[i])));
  }
  EXPECT_EQ(std::filesystem::file_size(raw_path_for(dir / "v.json")), g.size() * 4);
  std::filesystem::resize_file(raw_path_for(dir / "v.json"), 8);
  EXPECT_THROW(read_volume(dir / "v.json"), InputError);
  EXPECT_THROW(read_volume(dir / "missing.json"), InputError);
  std::filesystem::remove_all(dir);
}

TEST(T2Fit, EightEchoNoiselessInversion) {
  const EchoSeries s = synthetic_series(40.0, 1000.0, {10, 20, 30, 40, 50, 60, 70, 80});
  for (double v : fit_t2(s).t2.values) EXPECT_NEAR(v / 40.0, 1.0, 1e-6);
}

TEST(Diffusion, OneIterationStepProfile) {
  VoxelGrid g = VoxelGrid::filled({6, 1, 1}, Vec3::Ones(), 0.0);
  for (std::int64_t i = 3; i < 6; ++i) g.values[g.linear(i, 0, 0)] = 100.0;
  DiffusionParams p;
  p.iterations = 1;
  const VoxelGrid out = smooth_anisotropic_diffusion(g, p);
  const VoxelGrid ref = reference_diffusion(g, p);
  for (std::size_t v = 0; v < g.size(); ++v) EXPECT_NEAR(out.values[v], ref.values[v], 1e-12);
  const double flux = 0.125 * std::exp(-(100.0 / 3.0) * (100.0 / 3.0)) * 100.0;
  EXPECT_NEAR(out.values[2], flux, 1e-12);
  EXPECT_EQ(out.values[0], 0.0);
}

TEST(VoxelGridIndex, SpecExamples) {
  VoxelGrid g = VoxelGrid::filled({4, 4, 4}, Vec3(0.7, 0.5, 2.0), 0.0);
  g.origin = Vec3(1, 2, 3);
  EXPECT_EQ(world_to_index(g, g.origin).index, (Index3{0, 0, 0}));
  EXPECT_EQ(world_to_index(g, g.origin + Vec3(0.6 * 0.7, 0, 0)).index, (Index3{1, 0, 0}));

  RigidTransform shift;
  shift.translation = Vec3(1, 2, 3);
  const VoxelGrid moved = apply_pose(g, shift);
  EXPECT_EQ(moved.origin, g.origin + Vec3(1, 2, 3));
  EXPECT_EQ(moved.values, g.values);

  RigidTransform rot;
  rot.rotation << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const VoxelGrid turned = apply_pose(g, rot);
  const Vec3 probe(2.3, 3.1, 5.9);
  EXPECT_EQ(world_to_index(turned, rot.apply(probe)).index, world_to_index(g, probe).index);
}
