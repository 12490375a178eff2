#include "rffi/gemm.hpp"

#include <algorithm>

#include <omp.h>

namespace rffi::nn::detail {

namespace {
constexpr std::size_t kJBlock = 256;  // column tile (2 KB rows stay in L1)
constexpr std::size_t kKBlock = 128;  // B tile of 256 KB stays in L2
}  // namespace

void dgemm_add(std::size_t m, std::size_t n, std::size_t k, const double* a,
               const double* b, double* c) {
    const std::size_t n_jb = (n + kJBlock - 1) / kJBlock;
#pragma omp parallel for schedule(static)
    for (std::size_t jb = 0; jb < n_jb; ++jb) {
        const std::size_t j0 = jb * kJBlock;
        const std::size_t j1 = std::min(j0 + kJBlock, n);
        const std::size_t jw = j1 - j0;
        for (std::size_t k0 = 0; k0 < k; k0 += kKBlock) {
            const std::size_t k1 = std::min(k0 + kKBlock, k);
            for (std::size_t i = 0; i < m; ++i) {
                const double* __restrict__ arow = a + i * k;
                double* __restrict__ crow = c + i * n + j0;
                for (std::size_t kk = k0; kk < k1; ++kk) {
                    const double v = arow[kk];
                    if (v == 0.0) continue;
                    const double* __restrict__ brow = b + kk * n + j0;
                    for (std::size_t j = 0; j < jw; ++j) crow[j] += v * brow[j];
                }
            }
        }
    }
}

void transpose_copy(std::size_t m, std::size_t n, const double* in, double* out) {
    constexpr std::size_t kTile = 32;
    for (std::size_t i0 = 0; i0 < m; i0 += kTile) {
        const std::size_t i1 = std::min(i0 + kTile, m);
        for (std::size_t j0 = 0; j0 < n; j0 += kTile) {
            const std::size_t j1 = std::min(j0 + kTile, n);
            for (std::size_t i = i0; i < i1; ++i)
                for (std::size_t j = j0; j < j1; ++j) out[j * m + i] = in[i * n + j];
        }
    }
}

}  // namespace rffi::nn::detail
