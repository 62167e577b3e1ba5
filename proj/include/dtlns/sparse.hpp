#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dtlns/common.hpp"

namespace dtlns {

/// Square sparse matrix in compressed-row form. Column indices are sorted
/// within each row.
struct CsrMatrix {
  std::size_t dim = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col;
  std::vector<double> val;

  std::size_t nnz() const noexcept { return col.size(); }
  double at(std::size_t r, std::size_t c) const;
  // y = A x
  void multiply(std::span<const double> x, std::span<double> y) const;
  // Y = A X for row-major X with dim rows.
  void multiply_rows(const Matrix& x, Matrix& y) const;
};

}  // namespace dtlns
