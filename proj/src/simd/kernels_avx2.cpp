// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "kernels_internal.hpp"

namespace dtlns::simd::detail {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sw = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sw));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void lerp_avx2(double lambda, const double* p, const double* q, double* out, std::size_t n) {
  const double mu = 1.0 - lambda;
  const __m256d vl = _mm256_set1_pd(lambda);
  const __m256d vm = _mm256_set1_pd(mu);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_mul_pd(vm, _mm256_loadu_pd(q + i));
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(vl, _mm256_loadu_pd(p + i), t));
  }
  for (; i < n; ++i) out[i] = lambda * p[i] + mu * q[i];
}

double squared_distance_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void dot_rows_avx2(const double* rows, std::size_t count, const double* v, double* out,
                   std::size_t n) {
  for (std::size_t r = 0; r < count; ++r) out[r] = dot_avx2(rows + r * n, v, n);
}

void adam_update_avx2(const AdamParams& p, const double* grad, double* m, double* v,
                      double* param, std::size_t n) {
  const __m256d b1 = _mm256_set1_pd(p.beta1);
  const __m256d b1c = _mm256_set1_pd(1.0 - p.beta1);
  const __m256d b2 = _mm256_set1_pd(p.beta2);
  const __m256d b2c = _mm256_set1_pd(1.0 - p.beta2);
  const __m256d inv_bias1 = _mm256_set1_pd(1.0 / p.bias1);
  const __m256d inv_bias2 = _mm256_set1_pd(1.0 / p.bias2);
  const __m256d lr = _mm256_set1_pd(p.lr);
  const __m256d eps = _mm256_set1_pd(p.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(b1c, g));
    const __m256d vi =
        _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i), _mm256_mul_pd(b2c, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mhat = _mm256_mul_pd(mi, inv_bias1);
    const __m256d vhat = _mm256_mul_pd(vi, inv_bias2);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, mhat), _mm256_add_pd(_mm256_sqrt_pd(vhat), eps));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  for (; i < n; ++i) {
    m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * grad[i];
    v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / p.bias1;
    const double vhat = v[i] / p.bias2;
    param[i] -= p.lr * mhat / (std::sqrt(vhat) + p.eps);
  }
}

constexpr KernelTable kAvx2{
    "avx2",           dot_avx2,      axpy_avx2,       lerp_avx2,
    squared_distance_avx2, dot_rows_avx2, adam_update_avx2,
};

}  // namespace

const KernelTable& avx2_table() noexcept { return kAvx2; }

}  // namespace dtlns::simd::detail
