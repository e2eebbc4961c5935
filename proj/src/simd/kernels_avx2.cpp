// Compiled with -mavx2; only reached after a runtime CPU check.
#include <immintrin.h>

#include "stir/simd/kernels.hpp"

namespace stir::simd {
namespace {

inline double fold(__m256d v) {
  alignas(32) double lane[4];
  _mm256_store_pd(lane, v);
  return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

DotNorms dot_norms_avx2(const float* a, const float* b, std::size_t n) {
  __m256d dot = _mm256_setzero_pd();
  __m256d na = _mm256_setzero_pd();
  __m256d nb = _mm256_setzero_pd();
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    const __m256d x = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
    const __m256d y = _mm256_cvtps_pd(_mm_loadu_ps(b + i));
    dot = _mm256_add_pd(dot, _mm256_mul_pd(x, y));
    na = _mm256_add_pd(na, _mm256_mul_pd(x, x));
    nb = _mm256_add_pd(nb, _mm256_mul_pd(y, y));
  }
  DotNorms r{fold(dot), fold(na), fold(nb)};
  for (std::size_t i = body; i < n; ++i) {
    const double x = a[i];
    const double y = b[i];
    r.dot = r.dot + x * y;
    r.norm_sq_a = r.norm_sq_a + x * x;
    r.norm_sq_b = r.norm_sq_b + y * y;
  }
  return r;
}

double squared_norm_avx2(const float* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    const __m256d x = _mm256_cvtps_pd(_mm_loadu_ps(a + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(x, x));
  }
  double r = fold(acc);
  for (std::size_t i = body; i < n; ++i) {
    const double x = a[i];
    r = r + x * x;
  }
  return r;
}

double squared_distance_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double r = fold(acc);
  for (std::size_t i = body; i < n; ++i) {
    const double d = a[i] - b[i];
    r = r + d * d;
  }
  return r;
}

void accumulate_row_avx2(double* out, const double* prev, const float* x, std::size_t n) {
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    const __m256d v = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(prev + i), v));
  }
  for (std::size_t i = body; i < n; ++i) out[i] = prev[i] + static_cast<double>(x[i]);
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{"avx2", dot_norms_avx2, squared_norm_avx2,
                                 squared_distance_avx2, accumulate_row_avx2};
  return __builtin_cpu_supports("avx2") ? &table : nullptr;
}

}  // namespace stir::simd
