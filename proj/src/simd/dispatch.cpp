#include <cstdlib>
#include <string_view>

#include "stir/log.hpp"
#include "stir/simd/kernels.hpp"

namespace stir::simd {

#if !defined(STIR_HAVE_AVX2)
const KernelTable* avx2_kernels() { return nullptr; }
#endif
#if !defined(STIR_HAVE_NEON)
const KernelTable* neon_kernels() { return nullptr; }
#endif

namespace {

const KernelTable& select_kernels() {
  const char* forced = std::getenv("STIR_SIMD");
  if (forced != nullptr && *forced != '\0') {
    const std::string_view name(forced);
    if (name == "scalar") return scalar_kernels();
    if (name == "avx2" && avx2_kernels() != nullptr) return *avx2_kernels();
    if (name == "neon" && neon_kernels() != nullptr) return *neon_kernels();
    warn("STIR_SIMD names an unavailable kernel variant; using the default");
  }
  if (const KernelTable* t = avx2_kernels()) return *t;
  if (const KernelTable* t = neon_kernels()) return *t;
  return scalar_kernels();
}

}  // namespace

const KernelTable& active_kernels() {
  static const KernelTable& table = select_kernels();
  return table;
}

}  // namespace stir::simd
