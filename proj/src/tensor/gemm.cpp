#include "gemm.hpp"

#include <cblas.h>

namespace pointseg::detail {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, const float* b, float beta, float* c) {
  if (m == 0 || n == 0) return;
  const auto lda = static_cast<blasint>(trans_a ? m : k);
  const auto ldb = static_cast<blasint>(trans_b ? k : n);
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<blasint>(m), static_cast<blasint>(n), static_cast<blasint>(k), alpha, a, lda, b,
              ldb, beta, c, static_cast<blasint>(n));
}

void set_gemm_threads(int threads) {
  if (threads >= 1) openblas_set_num_threads(threads);
}

}  // namespace pointseg::detail
