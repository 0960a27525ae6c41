// Compiled with -mavx2 only (no -mfma): every multiply and add rounds
// separately, matching the scalar reference bit for bit.

#include "t2fe/simd/kernels.hpp"

#include <immintrin.h>

#include "exp_poly.hpp"

namespace t2fe::simd {

using namespace detail;

namespace {

inline __m256d exp_nonpositive_pd(__m256d x) {
  const __m256d keep = _mm256_cmp_pd(x, _mm256_set1_pd(kMinArg), _CMP_GE_OQ);
  const __m256d magic = _mm256_set1_pd(kMagic);
  const __m256d t = _mm256_add_pd(_mm256_mul_pd(x, _mm256_set1_pd(kLog2e)), magic);
  const __m256d n = _mm256_sub_pd(t, magic);
  __m256d r = _mm256_sub_pd(x, _mm256_mul_pd(n, _mm256_set1_pd(kLn2Hi)));
  r = _mm256_sub_pd(r, _mm256_mul_pd(n, _mm256_set1_pd(kLn2Lo)));
  __m256d p = _mm256_set1_pd(kExpCoeff[0]);
  for (int k = 1; k < 13; ++k) p = _mm256_add_pd(_mm256_mul_pd(p, r), _mm256_set1_pd(kExpCoeff[k]));
  __m256i e = _mm256_sub_epi64(_mm256_castpd_si256(t), _mm256_castpd_si256(magic));
  e = _mm256_slli_epi64(_mm256_add_epi64(e, _mm256_set1_epi64x(1023)), 52);
  return _mm256_and_pd(_mm256_mul_pd(p, _mm256_castsi256_pd(e)), keep);
}

inline __m256d face_flux(__m256d uc, const double* un, const double* mn, __m256d inv_hk,
                         __m256d w) {
  const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(un), uc);
  const __m256d s = _mm256_mul_pd(d, inv_hk);
  const __m256d s2 = _mm256_mul_pd(s, s);
  const __m256d neg = _mm256_xor_pd(s2, _mm256_set1_pd(-0.0));
  const __m256d g = exp_nonpositive_pd(neg);
  return _mm256_mul_pd(_mm256_mul_pd(_mm256_mul_pd(w, _mm256_loadu_pd(mn)), g), d);
}

void diffusion_row_avx2(const DiffusionRow& a) {
  const __m256d ihx = _mm256_set1_pd(a.inv_hk[0]);
  const __m256d ihy = _mm256_set1_pd(a.inv_hk[1]);
  const __m256d ihz = _mm256_set1_pd(a.inv_hk[2]);
  const __m256d wx = _mm256_set1_pd(a.weight[0]);
  const __m256d wy = _mm256_set1_pd(a.weight[1]);
  const __m256d wz = _mm256_set1_pd(a.weight[2]);
  const std::ptrdiff_t sy = a.stride_y;
  const std::ptrdiff_t sz = a.stride_z;
  std::size_t i = 0;
  for (; i + 4 <= a.count; i += 4) {
    const double* u = a.u + i;
    const double* m = a.mask + i;
    const __m256d uc = _mm256_loadu_pd(u);
    __m256d acc = _mm256_setzero_pd();
    acc = _mm256_add_pd(acc, face_flux(uc, u - 1, m - 1, ihx, wx));
    acc = _mm256_add_pd(acc, face_flux(uc, u + 1, m + 1, ihx, wx));
    acc = _mm256_add_pd(acc, face_flux(uc, u - sy, m - sy, ihy, wy));
    acc = _mm256_add_pd(acc, face_flux(uc, u + sy, m + sy, ihy, wy));
    acc = _mm256_add_pd(acc, face_flux(uc, u - sz, m - sz, ihz, wz));
    acc = _mm256_add_pd(acc, face_flux(uc, u + sz, m + sz, ihz, wz));
    _mm256_storeu_pd(a.out + i, _mm256_add_pd(uc, _mm256_mul_pd(_mm256_loadu_pd(m), acc)));
  }
  if (i < a.count) {
    DiffusionRow tail = a;
    tail.u += i;
    tail.mask += i;
    tail.out += i;
    tail.count -= i;
    scalar_kernels().diffusion_row(tail);
  }
}

void linear_combination_avx2(std::span<const double* const> planes,
                             std::span<const double> weights, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t k = 0; k < planes.size(); ++k)
      acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(weights[k]), _mm256_loadu_pd(planes[k] + i)));
    _mm256_storeu_pd(out + i, acc);
  }
  for (; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < planes.size(); ++k) acc = acc + weights[k] * planes[k][i];
    out[i] = acc;
  }
}

void clamped_affine_avx2(const double* in, double* out, std::size_t n, double lo, double hi,
                         double pivot_x, double pivot_y, double slope) {
  const __m256d vlo = _mm256_set1_pd(lo);
  const __m256d vhi = _mm256_set1_pd(hi);
  const __m256d px = _mm256_set1_pd(pivot_x);
  const __m256d py = _mm256_set1_pd(pivot_y);
  const __m256d s = _mm256_set1_pd(slope);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d c = _mm256_min_pd(_mm256_max_pd(_mm256_loadu_pd(in + i), vlo), vhi);
    _mm256_storeu_pd(out + i, _mm256_add_pd(py, _mm256_mul_pd(s, _mm256_sub_pd(c, px))));
  }
  if (i < n) scalar_kernels().clamped_affine(in + i, out + i, n - i, lo, hi, pivot_x, pivot_y, slope);
}

void classify_box_row_avx2(const BoxRowClassify& a) {
  double base[4];
  for (int p = 0; p < 4; ++p) base[p] = (a.ny[p] * a.y + a.nz[p] * a.z) - a.c[p];
  const __m256d zero = _mm256_setzero_pd();
  const __m256d hx = _mm256_set1_pd(a.hx);
  const __m256d x0 = _mm256_set1_pd(a.x0);
  std::size_t i = 0;
  for (; i + 4 <= a.count; i += 4) {
    const double fi = static_cast<double>(i);
    const __m256d idx = _mm256_set_pd(fi + 3.0, fi + 2.0, fi + 1.0, fi);
    const __m256d xc = _mm256_add_pd(x0, _mm256_mul_pd(idx, hx));
    __m256d outside = _mm256_setzero_pd();
    __m256d inside = _mm256_castsi256_pd(_mm256_set1_epi64x(-1));
    for (int p = 0; p < 4; ++p) {
      const __m256d d = _mm256_add_pd(_mm256_mul_pd(_mm256_set1_pd(a.nx[p]), xc), _mm256_set1_pd(base[p]));
      const __m256d r = _mm256_set1_pd(a.radius[p]);
      outside = _mm256_or_pd(outside, _mm256_cmp_pd(_mm256_sub_pd(d, r), zero, _CMP_GE_OQ));
      inside = _mm256_and_pd(inside, _mm256_cmp_pd(_mm256_add_pd(d, r), zero, _CMP_LE_OQ));
    }
    const int out_bits = _mm256_movemask_pd(outside);
    const int in_bits = _mm256_movemask_pd(inside);
    for (int l = 0; l < 4; ++l) {
      a.out[i + l] = (out_bits >> l & 1) ? kOutside : ((in_bits >> l & 1) ? kInside : kStraddle);
    }
  }
  if (i < a.count) {
    // Keep the lane arithmetic x0 + i * hx identical by classifying the
    // remaining voxels with their absolute index.
    for (std::size_t j = i; j < a.count; ++j) {
      BoxRowClassify one = a;
      one.count = 1;
      one.out = a.out + j;
      one.x0 = a.x0 + static_cast<double>(j) * a.hx;
      one.hx = 0.0;
      scalar_kernels().classify_box_row(one);
    }
  }
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{Isa::avx2, diffusion_row_avx2, linear_combination_avx2,
                                 clamped_affine_avx2, classify_box_row_avx2};
  return &table;
}

}  // namespace t2fe::simd
