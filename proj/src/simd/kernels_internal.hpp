#pragma once

#include "dtlns/simd/kernels.hpp"

namespace dtlns::simd::detail {

#if defined(DTLNS_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif

}  // namespace dtlns::simd::detail
