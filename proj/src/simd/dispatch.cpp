#include <cstdlib>
#include <string_view>

#include "t2fe/simd/kernels.hpp"

namespace t2fe::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

#if !defined(T2FE_HAVE_AVX2)
const KernelTable* avx2_kernels() { return nullptr; }
#endif

bool cpu_has_avx2() {
#if defined(T2FE_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable& active_kernels() {
  static const KernelTable& table = [] () -> const KernelTable& {
    const char* force = std::getenv("T2FE_FORCE_SCALAR");
    if (force != nullptr && std::string_view(force) == "1") return scalar_kernels();
    if (cpu_has_avx2() && avx2_kernels() != nullptr) return *avx2_kernels();
    return scalar_kernels();
  }();
  return table;
}

}  // namespace t2fe::simd
