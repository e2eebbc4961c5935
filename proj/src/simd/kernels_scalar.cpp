#include "stir/simd/kernels.hpp"

namespace stir::simd {
namespace {

DotNorms dot_norms_scalar(const float* a, const float* b, std::size_t n) {
  double dot[4] = {0, 0, 0, 0};
  double na[4] = {0, 0, 0, 0};
  double nb[4] = {0, 0, 0, 0};
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double x = a[i + j];
      const double y = b[i + j];
      dot[j] = dot[j] + x * y;
      na[j] = na[j] + x * x;
      nb[j] = nb[j] + y * y;
    }
  }
  DotNorms r;
  r.dot = (dot[0] + dot[1]) + (dot[2] + dot[3]);
  r.norm_sq_a = (na[0] + na[1]) + (na[2] + na[3]);
  r.norm_sq_b = (nb[0] + nb[1]) + (nb[2] + nb[3]);
  for (std::size_t i = body; i < n; ++i) {
    const double x = a[i];
    const double y = b[i];
    r.dot = r.dot + x * y;
    r.norm_sq_a = r.norm_sq_a + x * x;
    r.norm_sq_b = r.norm_sq_b + y * y;
  }
  return r;
}

double squared_norm_scalar(const float* a, std::size_t n) {
  double acc[4] = {0, 0, 0, 0};
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double x = a[i + j];
      acc[j] = acc[j] + x * x;
    }
  }
  double r = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (std::size_t i = body; i < n; ++i) {
    const double x = a[i];
    r = r + x * x;
  }
  return r;
}

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
  double acc[4] = {0, 0, 0, 0};
  const std::size_t body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double d = a[i + j] - b[i + j];
      acc[j] = acc[j] + d * d;
    }
  }
  double r = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (std::size_t i = body; i < n; ++i) {
    const double d = a[i] - b[i];
    r = r + d * d;
  }
  return r;
}

void accumulate_row_scalar(double* out, const double* prev, const float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = prev[i] + static_cast<double>(x[i]);
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", dot_norms_scalar, squared_norm_scalar,
                                 squared_distance_scalar, accumulate_row_scalar};
  return table;
}

}  // namespace stir::simd
