#pragma once

// Shared constants for the nonpositive-argument exponential. The scalar and
// AVX2 kernels run the identical sequence:
//   t = x * log2e + magic;  n = t - magic           (round to nearest even)
//   r = (x - n * ln2_hi) - n * ln2_lo               (Cody-Waite reduction)
//   p = Horner(r, 1/12!, ..., 1/1!, 1)              (|r| <= ln2/2)
//   exp(x) = p * 2^n,  2^n built from the integer bits of t.
// Arguments below kMinArg flush to zero.

namespace t2fe::simd::detail {

inline constexpr double kMinArg = -708.0;
inline constexpr double kLog2e = 1.4426950408889634;
inline constexpr double kMagic = 6755399441055744.0;  // 1.5 * 2^52
inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;

inline constexpr double kExpCoeff[13] = {
    1.0 / 479001600.0,  // 1/12!
    1.0 / 39916800.0,   // 1/11!
    1.0 / 3628800.0,
    1.0 / 362880.0,
    1.0 / 40320.0,
    1.0 / 5040.0,
    1.0 / 720.0,
    1.0 / 120.0,
    1.0 / 24.0,
    1.0 / 6.0,
    0.5,
    1.0,
    1.0,
};

}  // namespace t2fe::simd::detail
