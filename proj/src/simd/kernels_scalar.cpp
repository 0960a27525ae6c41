#include "t2fe/simd/kernels.hpp"

#include <bit>
#include <cstdint>

#include "exp_poly.hpp"

namespace t2fe::simd {

using namespace detail;

double exp_nonpositive(double x) {
  if (!(x >= kMinArg)) return 0.0;
  const double t = x * kLog2e + kMagic;
  const double n = t - kMagic;
  double r = x - n * kLn2Hi;
  r = r - n * kLn2Lo;
  double p = kExpCoeff[0];
  for (int k = 1; k < 13; ++k) p = p * r + kExpCoeff[k];
  std::int64_t e = std::bit_cast<std::int64_t>(t) - std::bit_cast<std::int64_t>(kMagic);
  e = (e + 1023) << 52;
  return p * std::bit_cast<double>(e);
}

namespace {

// MAXPD / MINPD operand semantics, so a NaN input behaves as in AVX2.
inline double max_pd(double a, double b) { return a > b ? a : b; }
inline double min_pd(double a, double b) { return a < b ? a : b; }

inline double face_flux(double uc, double un, double mn, double inv_hk, double w) {
  const double d = un - uc;
  const double s = d * inv_hk;
  const double s2 = s * s;
  const double g = exp_nonpositive(-s2);
  return ((w * mn) * g) * d;
}

void diffusion_row_scalar(const DiffusionRow& a) {
  for (std::size_t i = 0; i < a.count; ++i) {
    const double* u = a.u + i;
    const double* m = a.mask + i;
    const double uc = u[0];
    double acc = 0.0;
    acc = acc + face_flux(uc, u[-1], m[-1], a.inv_hk[0], a.weight[0]);
    acc = acc + face_flux(uc, u[1], m[1], a.inv_hk[0], a.weight[0]);
    acc = acc + face_flux(uc, u[-a.stride_y], m[-a.stride_y], a.inv_hk[1], a.weight[1]);
    acc = acc + face_flux(uc, u[a.stride_y], m[a.stride_y], a.inv_hk[1], a.weight[1]);
    acc = acc + face_flux(uc, u[-a.stride_z], m[-a.stride_z], a.inv_hk[2], a.weight[2]);
    acc = acc + face_flux(uc, u[a.stride_z], m[a.stride_z], a.inv_hk[2], a.weight[2]);
    a.out[i] = uc + m[0] * acc;
  }
}

void linear_combination_scalar(std::span<const double* const> planes,
                               std::span<const double> weights, double* out,
                               std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < planes.size(); ++k) acc = acc + weights[k] * planes[k][i];
    out[i] = acc;
  }
}

void clamped_affine_scalar(const double* in, double* out, std::size_t n, double lo,
                           double hi, double pivot_x, double pivot_y, double slope) {
  for (std::size_t i = 0; i < n; ++i) {
    const double c = min_pd(max_pd(in[i], lo), hi);
    out[i] = pivot_y + slope * (c - pivot_x);
  }
}

void classify_box_row_scalar(const BoxRowClassify& a) {
  double base[4];
  for (int p = 0; p < 4; ++p) base[p] = (a.ny[p] * a.y + a.nz[p] * a.z) - a.c[p];
  for (std::size_t i = 0; i < a.count; ++i) {
    const double xc = a.x0 + static_cast<double>(i) * a.hx;
    bool outside = false;
    bool inside = true;
    for (int p = 0; p < 4; ++p) {
      const double d = a.nx[p] * xc + base[p];
      outside = outside || (d - a.radius[p] >= 0.0);
      inside = inside && (d + a.radius[p] <= 0.0);
    }
    a.out[i] = outside ? kOutside : (inside ? kInside : kStraddle);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::scalar, diffusion_row_scalar, linear_combination_scalar,
                                 clamped_affine_scalar, classify_box_row_scalar};
  return table;
}

}  // namespace t2fe::simd
