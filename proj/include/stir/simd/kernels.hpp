#pragma once

// Numeric inner loops shared by similarity search and segmentation.
//
// Every reduction uses the same fixed order on every code path: four
// interleaved double accumulators (lane j sums elements i with i % 4 == j
// over the largest multiple of four), folded as (l0 + l1) + (l2 + l3), then
// the tail added in index order. The scalar reference spells that order out
// explicitly so SIMD variants are bit-identical to it, which keeps pipeline
// output byte-stable regardless of which variant the CPU selects.

#include <cstddef>
#include <span>
#include <string_view>

namespace stir::simd {

struct DotNorms {
  double dot = 0.0;
  double norm_sq_a = 0.0;
  double norm_sq_b = 0.0;
};

struct KernelTable {
  std::string_view name;
  // a and b must have equal length.
  DotNorms (*dot_norms)(const float* a, const float* b, std::size_t n);
  double (*squared_norm)(const float* a, std::size_t n);
  // sum_i (a[i] - b[i])^2 over doubles.
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // out[i] = prev[i] + x[i]
  void (*accumulate_row)(double* out, const double* prev, const float* x, std::size_t n);
};

const KernelTable& scalar_kernels();

// Returns nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

// The table selected for this process: the widest supported variant, unless
// the STIR_SIMD environment variable names one ("scalar", "avx2", "neon").
const KernelTable& active_kernels();

inline DotNorms dot_norms(std::span<const float> a, std::span<const float> b) {
  return active_kernels().dot_norms(a.data(), b.data(), a.size());
}

inline double squared_norm(std::span<const float> a) {
  return active_kernels().squared_norm(a.data(), a.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active_kernels().squared_distance(a.data(), b.data(), a.size());
}

inline void accumulate_row(std::span<double> out, std::span<const double> prev,
                           std::span<const float> x) {
  active_kernels().accumulate_row(out.data(), prev.data(), x.data(), out.size());
}

}  // namespace stir::simd
