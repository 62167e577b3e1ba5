#pragma once

// Data-parallel inner loops shared by the backbone, sampler, tree and eval
// modules. Every kernel has a scalar reference implementation; vectorized
// variants are picked once at startup from the running CPU's features.

#include <cstddef>
#include <span>
#include <string_view>

namespace dtlns::simd {

struct AdamParams {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t
};

struct KernelTable {
  std::string_view name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = lambda * p + (1 - lambda) * q
  void (*lerp)(double lambda, const double* p, const double* q, double* out, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // out[r] = dot(rows[r*n .. r*n+n), v) for r in [0, count)
  void (*dot_rows)(const double* rows, std::size_t count, const double* v, double* out,
                   std::size_t n);
  void (*adam_update)(const AdamParams& p, const double* grad, double* m, double* v,
                      double* param, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;

/// AVX2+FMA variant, or nullptr when not compiled in or unsupported by the CPU.
const KernelTable* avx2_kernels() noexcept;

/// Kernel table used by the library. Selected on first use: the best variant
/// the CPU supports, unless DTLNS_SIMD=scalar is set in the environment.
const KernelTable& active() noexcept;

// Convenience wrappers over active().
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void lerp(double lambda, std::span<const double> p, std::span<const double> q,
                 std::span<double> out) {
  active().lerp(lambda, p.data(), q.data(), out.data(), out.size());
}
inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

}  // namespace dtlns::simd
