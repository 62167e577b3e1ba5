#include <cmath>

#include "dtlns/simd/kernels.hpp"
#include "kernels_internal.hpp"

namespace dtlns::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void lerp_scalar(double lambda, const double* p, const double* q, double* out, std::size_t n) {
  const double mu = 1.0 - lambda;
  for (std::size_t i = 0; i < n; ++i) out[i] = lambda * p[i] + mu * q[i];
}

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void dot_rows_scalar(const double* rows, std::size_t count, const double* v, double* out,
                     std::size_t n) {
  for (std::size_t r = 0; r < count; ++r) out[r] = dot_scalar(rows + r * n, v, n);
}

void adam_update_scalar(const AdamParams& p, const double* grad, double* m, double* v,
                        double* param, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * grad[i];
    v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / p.bias1;
    const double vhat = v[i] / p.bias2;
    param[i] -= p.lr * mhat / (std::sqrt(vhat) + p.eps);
  }
}

constexpr KernelTable kScalar{
    "scalar",           dot_scalar,      axpy_scalar,       lerp_scalar,
    squared_distance_scalar, dot_rows_scalar, adam_update_scalar,
};

}  // namespace

const KernelTable& scalar_kernels() noexcept { return kScalar; }

}  // namespace dtlns::simd
