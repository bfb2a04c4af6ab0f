#include "rdcl/nn/gemm.hpp"

#include <algorithm>

namespace rdcl::nn {

namespace {

constexpr int kColBlock = 512;

// Four output rows against one block of B columns. Each C element sees its
// k terms in order; the compiler is free to vectorise across j only.
template <int Rows>
inline void rows_kernel(int jb, int k, const float* const* a_rows, int a_stride, const float* b, int ldb,
                        float* const* c_rows) {
    for (int p = 0; p < k; ++p) {
        const float* __restrict__ brow = b + static_cast<std::size_t>(p) * ldb;
        float av[Rows];
        for (int r = 0; r < Rows; ++r) av[r] = a_rows[r][static_cast<std::size_t>(p) * a_stride];
        if constexpr (Rows == 4) {
            float* __restrict__ c0 = c_rows[0];
            float* __restrict__ c1 = c_rows[1];
            float* __restrict__ c2 = c_rows[2];
            float* __restrict__ c3 = c_rows[3];
            for (int j = 0; j < jb; ++j) {
                const float bv = brow[j];
                c0[j] += av[0] * bv;
                c1[j] += av[1] * bv;
                c2[j] += av[2] * bv;
                c3[j] += av[3] * bv;
            }
        } else {
            for (int r = 0; r < Rows; ++r) {
                float* __restrict__ cr = c_rows[r];
                const float a = av[r];
                for (int j = 0; j < jb; ++j) cr[j] += a * brow[j];
            }
        }
    }
}

// Shared driver: element (i, p) of A lives at a[i * row_stride + p * k_stride].
void gemm_driver(int m, int n, int k, const float* a, std::size_t row_stride, int k_stride, const float* b, int ldb,
                 float* c, int ldc) {
    for (int j0 = 0; j0 < n; j0 += kColBlock) {
        const int jb = std::min(kColBlock, n - j0);
        int i = 0;
        for (; i + 4 <= m; i += 4) {
            const float* ar[4];
            float* cr[4];
            for (int r = 0; r < 4; ++r) {
                ar[r] = a + (i + r) * row_stride;
                cr[r] = c + static_cast<std::size_t>(i + r) * ldc + j0;
            }
            rows_kernel<4>(jb, k, ar, k_stride, b + j0, ldb, cr);
        }
        for (; i < m; ++i) {
            const float* ar[1] = {a + i * row_stride};
            float* cr[1] = {c + static_cast<std::size_t>(i) * ldc + j0};
            rows_kernel<1>(jb, k, ar, k_stride, b + j0, ldb, cr);
        }
    }
}

}  // namespace

void gemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
    gemm_driver(m, n, k, a, static_cast<std::size_t>(lda), 1, b, ldb, c, ldc);
}

void gemm_tn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
    gemm_driver(m, n, k, a, 1, lda, b, ldb, c, ldc);
}

void gemm_nt(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
    constexpr int kLanes = 8;
    for (int i = 0; i < m; ++i) {
        const float* __restrict__ arow = a + static_cast<std::size_t>(i) * lda;
        for (int j = 0; j < n; ++j) {
            const float* __restrict__ brow = b + static_cast<std::size_t>(j) * ldb;
            float lanes[kLanes] = {};
            int p = 0;
            for (; p + kLanes <= k; p += kLanes)
                for (int l = 0; l < kLanes; ++l) lanes[l] += arow[p + l] * brow[p + l];
            float tail = 0.0f;
            for (; p < k; ++p) tail += arow[p] * brow[p];
            float sum = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
            c[static_cast<std::size_t>(i) * ldc + j] += sum + tail;
        }
    }
}

}  // namespace rdcl::nn
