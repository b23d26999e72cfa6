#pragma once

#include <cstddef>

namespace pointseg::detail {

/// Row-major C = alpha * op(A) * op(B) + beta * C, op(X) = X or X^T.
/// A is (m x k) after op, B is (k x n) after op, C is (m x n).
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, const float* b, float beta, float* c);

void set_gemm_threads(int threads);

}  // namespace pointseg::detail
