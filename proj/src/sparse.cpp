#include "dtlns/sparse.hpp"

#include <algorithm>

#include "dtlns/simd/kernels.hpp"

namespace dtlns {

double CsrMatrix::at(std::size_t r, std::size_t c) const {
  const auto first = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
  const auto last = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
  const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(c));
  return (it != last && *it == c) ? val[static_cast<std::size_t>(it - col.begin())] : 0.0;
}

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (std::size_t r = 0; r < dim; ++r) {
    double s = 0.0;
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += val[k] * x[col[k]];
    y[r] = s;
  }
}

void CsrMatrix::multiply_rows(const Matrix& x, Matrix& y) const {
  if (y.rows() != dim || y.cols() != x.cols()) y = Matrix(dim, x.cols());
  y.fill(0.0);
  const auto& kernels = simd::active();
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < dim; ++r) {
    double* out = y.row(r).data();
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
      kernels.axpy(val[k], x.row(col[k]).data(), out, n);
    }
  }
}

}  // namespace dtlns
