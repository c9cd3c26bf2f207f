#pragma once

#include <cstddef>

namespace pulsar::detail {

// Row-major C = alpha * op(A) * op(B) + beta * C.
// op(A) is m x k, op(B) is k x n; lda/ldb/ldc are row strides of the stored
// (untransposed) matrices. Backed by OpenBLAS when built with it, otherwise a
// portable blocked fallback with identical semantics.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);

// True when the BLAS backend is in use (threads are pinned to one for
// reproducibility).
bool gemm_uses_blas();

}  // namespace pulsar::detail
