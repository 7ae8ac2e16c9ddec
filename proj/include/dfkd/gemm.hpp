#pragma once

#include <cstdint>

namespace dfkd {

// Row-major f32 matrix kernels. Every output element accumulates its k-terms
// in ascending order regardless of thread count, so results are bitwise
// deterministic. Parallelized over independent output rows.

// C[M,N] (+)= A[M,K] * B[K,N]
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
             const float* b, float* c, bool accumulate);

// C[M,N] (+)= A[M,K] * B[N,K]^T
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
             const float* b, float* c, bool accumulate);

// C[K,N] (+)= A[M,K]^T * B[M,N]
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
             const float* b, float* c, bool accumulate);

}  // namespace dfkd
