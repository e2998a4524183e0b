#include "gemm.hpp"

#include <Eigen/Core>

namespace trunet::detail {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, T alpha,
          const T* a, const T* b, T beta, T* c) {
  Eigen::Map<RowMat<T>> out(c, m, n);
  if (beta == T(0)) {
    out.setZero();
  } else if (beta != T(1)) {
    out *= beta;
  }
  // Stored shapes: A is (m,k) or (k,m); B is (k,n) or (n,k).
  Eigen::Map<const RowMat<T>> a_mat(a, trans_a ? k : m, trans_a ? m : k);
  Eigen::Map<const RowMat<T>> b_mat(b, trans_b ? n : k, trans_b ? k : n);
  if (!trans_a && !trans_b) {
    out.noalias() += alpha * a_mat * b_mat;
  } else if (trans_a && !trans_b) {
    out.noalias() += alpha * a_mat.transpose() * b_mat;
  } else if (!trans_a && trans_b) {
    out.noalias() += alpha * a_mat * b_mat.transpose();
  } else {
    out.noalias() += alpha * a_mat.transpose() * b_mat.transpose();
  }
}

template void gemm<float>(bool, bool, std::int64_t, std::int64_t, std::int64_t, float, const float*,
                          const float*, float, float*);
template void gemm<double>(bool, bool, std::int64_t, std::int64_t, std::int64_t, double,
                           const double*, const double*, double, double*);

}  // namespace trunet::detail
