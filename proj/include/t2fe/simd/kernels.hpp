#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference
// implementation and an AVX2 variant; the active table is chosen once at
// startup from CPUID. Both variants evaluate the same operation sequence
// (the build disables FP contraction), so their results are bit-identical
// and the equivalence tests compare with ==.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace t2fe::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// One x-row of the padded diffusion update. `u` and `mask` point at the
/// first interior voxel of the row inside a buffer padded by one voxel on
/// every side; neighbours are reached with strides 1, `stride_y`, `stride_z`.
/// Per face: flux = weight[a] * mask_n * exp(-(d * inv_hk[a])^2) * d with
/// d = u_n - u_c, faces visited in the order -x, +x, -y, +y, -z, +z.
struct DiffusionRow {
  const double* u;
  const double* mask;
  double* out;
  std::size_t count;
  std::ptrdiff_t stride_y;
  std::ptrdiff_t stride_z;
  double inv_hk[3];
  double weight[3];
};

/// Four half-space planes of a tetrahedron (n . q <= c inside) evaluated on
/// a row of axis-aligned boxes centred at (x0 + i * hx, y, z).
struct BoxRowClassify {
  double nx[4], ny[4], nz[4], c[4];
  double radius[4];  // half-extent of a box projected on each normal
  double x0, hx, y, z;
  std::size_t count;
  std::uint8_t* out;  // 0 outside, 1 fully inside, 2 straddling
};

enum BoxClass : std::uint8_t { kOutside = 0, kInside = 1, kStraddle = 2 };

struct KernelTable {
  Isa isa;
  void (*diffusion_row)(const DiffusionRow& args);
  /// out[i] = sum_k weights[k] * planes[k][i], accumulated in k order.
  void (*linear_combination)(std::span<const double* const> planes,
                             std::span<const double> weights, double* out,
                             std::size_t n);
  /// out[i] = pivot_y + slope * (clamp(in[i], lo, hi) - pivot_x).
  /// Clamping follows MAXPD/MINPD semantics: a NaN input maps to lo.
  void (*clamped_affine)(const double* in, double* out, std::size_t n,
                         double lo, double hi, double pivot_x, double pivot_y,
                         double slope);
  void (*classify_box_row)(const BoxRowClassify& args);
};

const KernelTable& scalar_kernels();
/// Null when the binary was built without AVX2 support.
const KernelTable* avx2_kernels();

/// Best table the running CPU supports. Setting T2FE_FORCE_SCALAR=1 in the
/// environment pins the scalar table.
const KernelTable& active_kernels();

bool cpu_has_avx2();

/// exp(x) for x <= 0 as evaluated by every kernel variant; exposed so
/// reference implementations can reuse the exact polynomial.
double exp_nonpositive(double x);

}  // namespace t2fe::simd
