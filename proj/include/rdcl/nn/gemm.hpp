#pragma once

#include <cstddef>

namespace rdcl::nn {

// Row-major single-precision matrix products that accumulate into C.
//
// gemm_nn and gemm_tn sum each C[i][j] strictly in increasing k, starting
// from C's current value, independent of blocking and vector width. The
// coding path relies on that: a single output evaluated on its own with
// the same loop order reproduces the batched result bit for bit.

/// C[M,N] += A[M,K] * B[K,N]
void gemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc);

/// C[M,N] += A[K,M]^T * B[K,N]
void gemm_tn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc);

/// C[M,N] += A[M,K] * B[N,K]^T
void gemm_nt(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc);

}  // namespace rdcl::nn
