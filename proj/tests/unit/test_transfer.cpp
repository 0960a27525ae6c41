#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "t2fe/clip.hpp"
#include "t2fe/transfer.hpp"

using namespace t2fe;

namespace {

HexMesh single_hex(const Vec3& lo, const Vec3& hi) {
  return structured_box_mesh({1, 1, 1}, lo, hi, Part::tibial_cartilage);
}

hex8::Corners box_corners(const Vec3& lo, const Vec3& hi) { return single_hex(lo, hi).corners(0); }

VoxelGrid unit_grid(const Index3& dims, double fill = 0.0) {
  return VoxelGrid::filled(dims, Vec3::Ones(), fill);
}

}  // namespace

TEST(HexBoxOverlap, CoincidentAndHalfVoxels) {
  const auto cube = box_corners(Vec3::Zero(), Vec3::Ones());
  EXPECT_NEAR(hex_box_overlap_volume(cube, Vec3::Zero(), Vec3::Ones()), 1.0, 1e-15);
  const auto shifted = box_corners(Vec3(0.5, 0, 0), Vec3(1.5, 1, 1));
  EXPECT_NEAR(hex_box_overlap_volume(shifted, Vec3::Zero(), Vec3::Ones()), 0.5, 1e-15);
  EXPECT_NEAR(hex_box_overlap_volume(shifted, Vec3(1, 0, 0), Vec3(2, 1, 1)), 0.5, 1e-15);
  EXPECT_EQ(hex_box_overlap_volume(cube, Vec3(2, 2, 2), Vec3(3, 3, 3)), 0.0);
}

TEST(HexBoxOverlap, MatchesMonteCarloOracle) {
  std::mt19937_64 rng(11), mc_rng(12);
  std::uniform_real_distribution<double> off(-0.6, 0.6);
  constexpr std::size_t kSamples = 100000;
  int agree = 0, pairs = 60;
  for (int t = 0; t < pairs; ++t) {
    const auto hex = oracle::random_hex(rng, Vec3::Zero(), Vec3(1.0, 0.8, 1.2), 0.15);
    const Vec3 size(0.5, 0.45, 0.9);
    const Vec3 lo = Vec3(off(rng), off(rng), off(rng)) - size / 2;
    const Vec3 hi = lo + size;
    const double exact = hex_box_overlap_volume(hex, lo, hi);
    const auto mc = oracle::mc_overlap(hex, lo, hi, kSamples, mc_rng);
    agree += oracle::within_three_se(exact, mc, size.prod(), kSamples);
  }
  EXPECT_GE(agree, pairs - 2);
}

TEST(HexBoxOverlap, OverlapsPartitionTheElement) {
  std::mt19937_64 rng(13);
  VoxelGrid g = VoxelGrid::filled({20, 20, 10}, Vec3(0.3125, 0.3125, 0.7), 1.0);
  g.origin = Vec3(-3, -3, -3);
  g.direction = Eigen::AngleAxisd(0.4, Vec3(0, 0, 1)).toRotationMatrix();
  for (int t = 0; t < 50; ++t) {
    const auto hex = oracle::random_hex(rng, g.origin + g.direction * Vec3(3, 3, 3.2), Vec3(1.1, 0.9, 1.6), 0.15);
    for (const auto* k : {&simd::scalar_kernels(), simd::avx2_kernels()}) {
      if (k == nullptr || (k->isa == simd::Isa::avx2 && !simd::cpu_has_avx2())) continue;
      double sum = 0.0;
      for (const auto& o : element_overlaps(hex, g, *k)) sum += o.volume;
      EXPECT_NEAR(sum / clip::tet_decomposition_volume(hex), 1.0, 1e-12);
    }
  }
}

TEST(HexBoxOverlap, ScalarAndAvx2AgreeExactly) {
  const simd::KernelTable* avx = simd::avx2_kernels();
  if (avx == nullptr || !simd::cpu_has_avx2()) GTEST_SKIP() << "AVX2 not available";
  std::mt19937_64 rng(14);
  VoxelGrid g = VoxelGrid::filled({16, 16, 8}, Vec3(0.3125, 0.3125, 0.7), 1.0);
  for (int t = 0; t < 50; ++t) {
    const auto hex = oracle::random_hex(rng, Vec3(2.5, 2.5, 2.8), Vec3(1.1, 0.9, 1.6), 0.15);
    const auto a = element_overlaps(hex, g, simd::scalar_kernels());
    const auto b = element_overlaps(hex, g, *avx);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].index, b[i].index);
      EXPECT_EQ(a[i].volume, b[i].volume);
    }
  }
}

TEST(HexBoxOverlap, RejectsInvertedElement) {
  auto c = box_corners(Vec3::Zero(), Vec3::Ones());
  std::swap(c[0], c[6]);
  EXPECT_THROW(hex_box_overlap_volume(c, Vec3::Zero(), Vec3::Ones()), GeometryError);
}

TEST(NearestNeighbor, CentreRoundingAndFallback) {
  VoxelGrid g = unit_grid({3, 1, 1});
  g.values = {52.0, 61.0, 70.0};
  // Centroid exactly at voxel 0.
  EXPECT_EQ(assign_nearest_neighbor(single_hex(Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)), g).values[0], 52.0);
  // Centroid 0.6 voxels from voxel 0 toward voxel 1.
  EXPECT_EQ(assign_nearest_neighbor(single_hex(Vec3(0.1, -0.5, -0.5), Vec3(1.1, 0.5, 0.5)), g).values[0], 61.0);
  // Centroid one voxel beyond the last voxel.
  const ElementField out = assign_nearest_neighbor(single_hex(Vec3(2.5, -0.5, -0.5), Vec3(3.5, 0.5, 0.5)), g);
  EXPECT_EQ(out.values[0], 70.0);
  EXPECT_EQ(out.warnings, 1u);
  EXPECT_EQ(out.method, FieldMethod::nearest_neighbor);
}

TEST(NearestNeighbor, InvalidVoxelFallsBackWithLowestIndexTie) {
  VoxelGrid g = unit_grid({3, 1, 1});
  g.values = {10.0, std::numeric_limits<double>::quiet_NaN(), 30.0};
  const ElementField out = assign_nearest_neighbor(single_hex(Vec3(0.5, -0.5, -0.5), Vec3(1.5, 0.5, 0.5)), g);
  EXPECT_EQ(out.values[0], 10.0);
  EXPECT_EQ(out.warnings, 1u);
}

TEST(VolumeWeighted, SpecExamples) {
  VoxelGrid g = unit_grid({2, 1, 1});
  g.values = {40.0, 40.0};
  ElementField f = assign_volume_weighted(single_hex(Vec3(-0.4, -0.4, -0.4), Vec3(0.3, 0.3, 0.3)), g);
  EXPECT_NEAR(f.values[0], 40.0, 1e-12);
  EXPECT_NEAR(f.coverage[0], 1.0, 1e-12);

  g.values = {30.0, 50.0};
  f = assign_volume_weighted(single_hex(Vec3(0, -0.5, -0.5), Vec3(1, 0.5, 0.5)), g);
  EXPECT_NEAR(f.values[0], 40.0, 1e-12);

  g.values = {20.0, 60.0};
  f = assign_volume_weighted(single_hex(Vec3(0.25, -0.5, -0.5), Vec3(1.25, 0.5, 0.5)), g);
  EXPECT_NEAR(f.values[0], 0.25 * 20.0 + 0.75 * 60.0, 1e-12);
  EXPECT_EQ(f.method, FieldMethod::volume_weighted);
}

TEST(VolumeWeighted, PartialCoverageAndFloorFallback) {
  VoxelGrid g = unit_grid({2, 1, 1});
  g.values = {20.0, std::numeric_limits<double>::quiet_NaN()};
  // Element 0 sits in voxel 0; element 1 is the probe.
  auto pair_with = [](const Vec3& lo, const Vec3& hi) {
    HexMesh m = single_hex(Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5));
    const HexMesh probe = single_hex(lo, hi);
    for (std::array<int, 8> e : probe.elements) {
      for (int& id : e) id += static_cast<int>(m.node_count());
      m.elements.push_back(e);
      m.parts.push_back(Part::tibial_cartilage);
    }
    m.nodes.insert(m.nodes.end(), probe.nodes.begin(), probe.nodes.end());
    return m;
  };
  ElementField f = assign_volume_weighted(pair_with(Vec3(0, -0.5, -0.5), Vec3(1, 0.5, 0.5)), g);
  EXPECT_NEAR(f.values[1], 20.0, 1e-12);
  EXPECT_NEAR(f.coverage[1], 0.5, 1e-12);
  EXPECT_EQ(f.warnings, 0u);

  // Only 0.5% of the element sees a valid voxel: nearest-neighbour fallback.
  f = assign_volume_weighted(pair_with(Vec3(0.495, -0.5, -0.5), Vec3(1.495, 0.5, 0.5)), g);
  EXPECT_EQ(f.warnings, 1u);
  EXPECT_EQ(f.values[1], 20.0);

  f = assign_volume_weighted(pair_with(Vec3(10, 10, 10), Vec3(11, 11, 11)), g);
  EXPECT_EQ(f.values[1], 20.0);
  EXPECT_EQ(f.coverage[1], 0.0);
  EXPECT_EQ(f.warnings, 1u);

  // A mesh that misses every valid voxel is a registration error.
  EXPECT_THROW(assign_volume_weighted(single_hex(Vec3(10, 10, 10), Vec3(11, 11, 11)), g), InputError);
}

TEST(VolumeWeighted, ThreadCountDoesNotChangeResult) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(20, 80);
  VoxelGrid g = VoxelGrid::filled({24, 24, 6}, Vec3(0.3125, 0.3125, 1.0), 0.0);
  for (double& v : g.values) v = u(rng);
  const HexMesh m = structured_box_mesh({5, 5, 3}, Vec3(0.2, 0.3, 0.1), Vec3(6.5, 6.1, 4.4));
  TransferOptions one, four;
  four.jobs = 4;
  EXPECT_EQ(assign_volume_weighted(m, g, one).values, assign_volume_weighted(m, g, four).values);
  EXPECT_EQ(assign_nearest_neighbor(m, g, 1).values, assign_nearest_neighbor(m, g, 3).values);
}

TEST(Texture, ConstantAndAlternatingChain) {
  const HexMesh chain = structured_box_mesh({7, 1, 1}, Vec3::Zero(), Vec3(7, 1, 1), Part::tibial_cartilage);
  ElementField f = ElementField::derived_from(std::vector<double>(7, 33.0), FieldUnit::milliseconds);
  TextureStats t = texture_stats(chain, f);
  EXPECT_EQ(t.roughness, 0.0);
  EXPECT_EQ(t.rms, 0.0);

  std::vector<double> alt(7);
  for (std::size_t i = 0; i < 7; ++i) alt[i] = i % 2 ? 50.0 : 30.0;
  f = ElementField::derived_from(alt, FieldUnit::milliseconds);
  t = texture_stats(chain, f);
  EXPECT_DOUBLE_EQ(t.roughness, 20.0);
  EXPECT_DOUBLE_EQ(t.rms, 20.0);
  EXPECT_EQ(t.count, 7u);
  EXPECT_THROW(texture_stats(chain, f, {Part::meniscus}), InputError);
}

TEST(Texture, WeightedIsSmootherOnNoisyGrid) {
  std::mt19937_64 rng(16);
  std::normal_distribution<double> noise(0.0, 6.0);
  VoxelGrid g = VoxelGrid::filled({40, 40, 8}, Vec3(0.3125, 0.3125, 0.6), 0.0);
  for (std::int64_t k = 0; k < 8; ++k)
    for (std::int64_t j = 0; j < 40; ++j)
      for (std::int64_t i = 0; i < 40; ++i) g.values[g.linear(i, j, k)] = 50.0 - 2.0 * k + noise(rng);
  const HexMesh m = structured_box_mesh({10, 10, 3}, Vec3(0, 0, 0), Vec3(11.5, 11.5, 4.0), Part::femoral_cartilage);
  const TextureStats w = texture_stats(m, assign_volume_weighted(m, g));
  const TextureStats n = texture_stats(m, assign_nearest_neighbor(m, g));
  EXPECT_LT(w.roughness, n.roughness);
  EXPECT_LT(w.rms, n.rms);
}

TEST(Agreement, HandCalculation) {
  const auto a = ElementField::derived_from({1, 2, 3, 4}, FieldUnit::milliseconds);
  const auto b = ElementField::derived_from({1.1, 1.9, 3.2, 3.8}, FieldUnit::milliseconds);
  const AgreementStats s = agreement(a, b);
  // d = (-0.1, 0.1, -0.2, 0.2): mean 0, sum of squares 0.1 over n-1 = 3.
  const double sd = std::sqrt(0.1 / 3.0);
  EXPECT_NEAR(s.bias, 0.0, 1e-15);
  EXPECT_NEAR(s.sd, sd, 1e-12);
  EXPECT_NEAR(s.sd, 0.182574, 1e-6);
  EXPECT_NEAR(s.loa_low, -1.96 * sd, 1e-12);
  EXPECT_NEAR(s.loa_high, 1.96 * sd, 1e-12);
  // Pearson: Sab = 3.0, Saa = 5, Sbb = 1.85 + ... computed from centred sums.
  const double ma = 2.5, mb = 2.5;
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 4; ++i) {
    sab += (a.values[i] - ma) * (b.values[i] - mb);
    saa += (a.values[i] - ma) * (a.values[i] - ma);
    sbb += (b.values[i] - mb) * (b.values[i] - mb);
  }
  EXPECT_NEAR(s.r_squared, sab * sab / (saa * sbb), 1e-12);
  EXPECT_NEAR(s.r_squared, 0.981777, 1e-6);
  EXPECT_EQ(s.n, 4u);
}

TEST(Agreement, IdentityAndOffset) {
  const auto a = ElementField::derived_from({3, 1, 4, 1, 5}, FieldUnit::milliseconds);
  AgreementStats s = agreement(a, a);
  EXPECT_EQ(s.bias, 0.0);
  EXPECT_EQ(s.loa_high - s.loa_low, 0.0);
  EXPECT_NEAR(s.r_squared, 1.0, 1e-15);
  auto b = a;
  for (double& v : b.values) v += 5.0;
  s = agreement(a, b);
  EXPECT_NEAR(s.bias, -5.0, 1e-14);
  EXPECT_NEAR(s.loa_high - s.loa_low, 0.0, 1e-13);
  EXPECT_THROW(agreement(a, ElementField::derived_from({1, 2}, FieldUnit::milliseconds)), InputError);
}

TEST(ElementFieldCsv, RoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "t2fe_field_test.csv";
  ElementField f = ElementField::derived_from({41.25, 0.1 + 0.2, 1e-300}, FieldUnit::milliseconds);
  f.coverage = {1.0, 0.5, 0.0};
  f.method = FieldMethod::volume_weighted;
  write_element_field_csv(path, f);
  const ElementField r = read_element_field_csv(path);
  EXPECT_EQ(r.values, f.values);
  EXPECT_EQ(r.coverage, f.coverage);
  EXPECT_EQ(r.method, FieldMethod::volume_weighted);
  std::filesystem::remove(path);
}
