#pragma once

#include <cstddef>

namespace rffi::nn::detail {

// C[M x N] += A[M x K] . B[K x N], row-major, blocked for L1/L2 reuse.
// The k-accumulation order is fixed (ascending) for every element, so the
// result does not depend on how threads split the column blocks.
void dgemm_add(std::size_t m, std::size_t n, std::size_t k, const double* a,
               const double* b, double* c);

// out[N x M] = in[M x N]
void transpose_copy(std::size_t m, std::size_t n, const double* in, double* out);

}  // namespace rffi::nn::detail
