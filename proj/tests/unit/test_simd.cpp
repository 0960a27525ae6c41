#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "t2fe/simd/kernels.hpp"

using namespace t2fe::simd;

namespace {

const KernelTable* avx2_or_skip() {
  const KernelTable* t = avx2_kernels();
  if (t == nullptr || !cpu_has_avx2()) return nullptr;
  return t;
}

}  // namespace

TEST(ExpPolynomial, MatchesStdExpOnNonpositiveRange) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-700.0, 0.0);
  for (int i = 0; i < 100000; ++i) {
    const double x = i < 1000 ? -i * 1e-3 : u(rng);
    const double ref = std::exp(x);
    EXPECT_NEAR(exp_nonpositive(x), ref, 4e-16 * ref) << x;
  }
  EXPECT_EQ(exp_nonpositive(0.0), 1.0);
  EXPECT_EQ(exp_nonpositive(-800.0), 0.0);
  EXPECT_EQ(exp_nonpositive(-std::numeric_limits<double>::infinity()), 0.0);
}

TEST(SimdDispatch, ActiveTableIsUsable) {
  const KernelTable& k = active_kernels();
  EXPECT_TRUE(k.isa == Isa::scalar || k.isa == Isa::avx2);
  EXPECT_EQ(isa_name(Isa::scalar), "scalar");
  EXPECT_EQ(scalar_kernels().isa, Isa::scalar);
}

TEST(SimdEquivalence, DiffusionRowBitIdentical) {
  const KernelTable* avx = avx2_or_skip();
  if (!avx) GTEST_SKIP() << "AVX2 not available";
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> val(0.0, 100.0);
  for (std::size_t nx : {1u, 3u, 4u, 7u, 8u, 13u, 64u}) {
    const std::ptrdiff_t px = static_cast<std::ptrdiff_t>(nx) + 2, py = 5, pz = 5;
    std::vector<double> u(static_cast<std::size_t>(px * py * pz)), m(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = val(rng);
      m[i] = (rng() % 5 == 0) ? 0.0 : 1.0;
    }
    std::vector<double> out_s(nx), out_v(nx);
    DiffusionRow row{};
    const std::ptrdiff_t start = (2 * py + 2) * px + 1;
    row.u = u.data() + start;
    row.mask = m.data() + start;
    row.count = nx;
    row.stride_y = px;
    row.stride_z = px * py;
    row.inv_hk[0] = 1.0 / (0.3125 * 3.0);
    row.inv_hk[1] = 1.0 / (0.3125 * 3.0);
    row.inv_hk[2] = 1.0 / (3.48 * 3.0);
    row.weight[0] = row.weight[1] = 0.125;
    row.weight[2] = 0.125 * (0.3125 / 3.48) * (0.3125 / 3.48);
    row.out = out_s.data();
    scalar_kernels().diffusion_row(row);
    row.out = out_v.data();
    avx->diffusion_row(row);
    for (std::size_t i = 0; i < nx; ++i) EXPECT_EQ(out_s[i], out_v[i]) << nx << ":" << i;
  }
}

TEST(SimdEquivalence, LinearCombinationBitIdentical) {
  const KernelTable* avx = avx2_or_skip();
  if (!avx) GTEST_SKIP() << "AVX2 not available";
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (std::size_t n : {1u, 5u, 16u, 1001u}) {
    std::vector<std::vector<double>> data(6, std::vector<double>(n));
    std::vector<const double*> planes;
    for (auto& p : data) {
      for (double& v : p) v = nd(rng);
      planes.push_back(p.data());
    }
    const std::vector<double> w = {-0.3, 0.1, 0.7, -1.2, 0.05, 2.0};
    std::vector<double> a(n), b(n);
    scalar_kernels().linear_combination(planes, w, a.data(), n);
    avx->linear_combination(planes, w, b.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(a[i], b[i]);
  }
}

TEST(SimdEquivalence, ClampedAffineBitIdenticalIncludingNaN) {
  const KernelTable* avx = avx2_or_skip();
  if (!avx) GTEST_SKIP() << "AVX2 not available";
  std::vector<double> in = {std::nan(""), -5, 0, 14.999, 15, 30, 45, 60, 75, 75.001, 1e9, 44.5, 17.25};
  std::vector<double> a(in.size()), b(in.size());
  scalar_kernels().clamped_affine(in.data(), a.data(), in.size(), 15, 75, 45, 4.5e6, -3.5e5 / 3.0);
  avx->clamped_affine(in.data(), b.data(), in.size(), 15, 75, 45, 4.5e6, -3.5e5 / 3.0);
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(a[i], b[i]) << i;
  EXPECT_EQ(a[0], a[1]);  // NaN clamps to the lower bound
}

TEST(SimdEquivalence, BoxClassificationIdentical) {
  const KernelTable* avx = avx2_or_skip();
  if (!avx) GTEST_SKIP() << "AVX2 not available";
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    BoxRowClassify c{};
    for (int p = 0; p < 4; ++p) {
      c.nx[p] = u(rng);
      c.ny[p] = u(rng);
      c.nz[p] = u(rng);
      c.c[p] = 0.5 * u(rng);
      c.radius[p] = 0.05 * (std::abs(c.nx[p]) + std::abs(c.ny[p]) + std::abs(c.nz[p]));
    }
    c.x0 = -1.0;
    c.hx = 0.1;
    c.y = u(rng);
    c.z = u(rng);
    c.count = 1 + static_cast<std::size_t>(trial % 23);
    std::vector<std::uint8_t> a(c.count), b(c.count);
    c.out = a.data();
    scalar_kernels().classify_box_row(c);
    c.out = b.data();
    avx->classify_box_row(c);
    EXPECT_EQ(a, b);
  }
}
