// AArch64 only. Two float64x2 registers hold lanes {0,1} and {2,3}.
#include <arm_neon.h>

#include "stir/simd/kernels.hpp"

namespace stir::simd {
namespace {

struct Lanes {
  float64x2_t lo;
  float64x2_t hi;
};

inline Lanes widen(const float* p) {
  const float32x4_t v = vld1q_f32(p);
  return {vcvt_f64_f32(vget_low_f32(v)), vcvt_high_f64_f32(v)};
}

inline double fold(float64x2_t lo, float64x2_t hi) {
  return (vgetq_lane_f64(lo, 0) + vgetq_lane_f64(lo, 1)) +
         (vgetq_lane_f64(hi, 0) + vgetq_lane_f64(hi, 1));
}

DotNorms dot_norms_neon(const float* a, const float* b, std::size_t n) {
  float64x2_t d0 = vdupq_n_f64(0), d1 = vdupq_n_f64(0);
  float64x2_t a0 = vdupq_n_f64(0), a1 = vdupq_n_f64(0);
  float64x2_t b0 = vdupq_n_f64(0), b1 = vdupq_n_f64(0);
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    const Lanes x = widen(a + i);
    const Lanes y = widen(b + i);
    d0 = vaddq_f64(d0, vmulq_f64(x.lo, y.lo));
    d1 = vaddq_f64(d1, vmulq_f64(x.hi, y.hi));
    a0 = vaddq_f64(a0, vmulq_f64(x.lo, x.lo));
    a1 = vaddq_f64(a1, vmulq_f64(x.hi, x.hi));
    b0 = vaddq_f64(b0, vmulq_f64(y.lo, y.lo));
    b1 = vaddq_f64(b1, vmulq_f64(y.hi, y.hi));
  }
  DotNorms r{fold(d0, d1), fold(a0, a1), fold(b0, b1)};
  for (std::size_t i = body; i < n; ++i) {
    const double x = a[i];
    const double y = b[i];
    r.dot = r.dot + x * y;
    r.norm_sq_a = r.norm_sq_a + x * x;
    r.norm_sq_b = r.norm_sq_b + y * y;
  }
  return r;
}

double squared_norm_neon(const float* a, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0), s1 = vdupq_n_f64(0);
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    const Lanes x = widen(a + i);
    s0 = vaddq_f64(s0, vmulq_f64(x.lo, x.lo));
    s1 = vaddq_f64(s1, vmulq_f64(x.hi, x.hi));
  }
  double r = fold(s0, s1);
  for (std::size_t i = body; i < n; ++i) {
    const double x = a[i];
    r = r + x * x;
  }
  return r;
}

double squared_distance_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0), s1 = vdupq_n_f64(0);
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    const float64x2_t lo = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    const float64x2_t hi = vsubq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    s0 = vaddq_f64(s0, vmulq_f64(lo, lo));
    s1 = vaddq_f64(s1, vmulq_f64(hi, hi));
  }
  double r = fold(s0, s1);
  for (std::size_t i = body; i < n; ++i) {
    const double d = a[i] - b[i];
    r = r + d * d;
  }
  return r;
}

void accumulate_row_neon(double* out, const double* prev, const float* x, std::size_t n) {
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    const Lanes v = widen(x + i);
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(prev + i), v.lo));
    vst1q_f64(out + i + 2, vaddq_f64(vld1q_f64(prev + i + 2), v.hi));
  }
  for (std::size_t i = body; i < n; ++i) out[i] = prev[i] + static_cast<double>(x[i]);
}

}  // namespace

const KernelTable* neon_kernels() {
  static const KernelTable table{"neon", dot_norms_neon, squared_norm_neon,
                                 squared_distance_neon, accumulate_row_neon};
  return &table;
}

}  // namespace stir::simd
