#pragma once

#include <cstdint>

namespace trunet::detail {

// C = alpha * op(A) * op(B) + beta * C for row-major buffers.
// op(A) is m x k, op(B) is k x n, C is m x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, const T* b, T beta, T* c);

}  // namespace trunet::detail
