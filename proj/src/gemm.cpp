#include "pulsar/gemm.hpp"

#include <mutex>
#include <vector>

#ifdef PULSAR_USE_OPENBLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace pulsar::detail {

#ifdef PULSAR_USE_OPENBLAS

namespace {
std::once_flag blas_init_flag;
void init_blas() {
  // single-threaded BLAS: bitwise-reproducible results, and the training
  // pipeline parallelizes across stream models instead
  std::call_once(blas_init_flag, [] { openblas_set_num_threads(1); });
}
}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  init_blas();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  init_blas();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

bool gemm_uses_blas() { return true; }

#else

namespace {

// Blocked i-k-j kernel; the j loop vectorizes. Transposed operands are packed
// into a scratch buffer first so the hot loop always walks contiguously.
template <class S>
void gemm_impl(bool trans_a, bool trans_b, int m, int n, int k, S alpha,
               const S* a, int lda, const S* b, int ldb, S beta, S* c,
               int ldc) {
  std::vector<S> pack_a, pack_b;
  if (trans_a) {
    pack_a.resize(static_cast<std::size_t>(m) * k);
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) pack_a[static_cast<std::size_t>(i) * k + p] = a[static_cast<std::size_t>(p) * lda + i];
    a = pack_a.data();
    lda = k;
  }
  if (trans_b) {
    pack_b.resize(static_cast<std::size_t>(k) * n);
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < n; ++j) pack_b[static_cast<std::size_t>(p) * n + j] = b[static_cast<std::size_t>(j) * ldb + p];
    b = pack_b.data();
    ldb = n;
  }

  for (int i = 0; i < m; ++i) {
    S* crow = c + static_cast<std::size_t>(i) * ldc;
    if (beta == S(0)) {
      for (int j = 0; j < n; ++j) crow[j] = S(0);
    } else if (beta != S(1)) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    const S* arow = a + static_cast<std::size_t>(i) * lda;
    for (int p = 0; p < k; ++p) {
      S av = alpha * arow[p];
      if (av == S(0)) continue;
      const S* brow = b + static_cast<std::size_t>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc) {
  gemm_impl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc) {
  gemm_impl(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

bool gemm_uses_blas() { return false; }

#endif

}  // namespace pulsar::detail
