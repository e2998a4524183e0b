// Batched matrix product.
#include "gemm.hpp"
#include "trunet/errors.hpp"
#include "trunet/ops.hpp"

namespace trunet {

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  if (x.rank() < 2 || y.rank() < 2) {
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(x.shape()) + " and " +
                     shape_str(y.shape()));
  }
  const std::int64_t m = x.dim(x.rank() - 2), k = x.dim(x.rank() - 1);
  const std::int64_t k2 = y.dim(y.rank() - 2), n = y.dim(y.rank() - 1);
  if (k != k2) {
    throw ShapeError("matmul: inner extents differ: " + shape_str(x.shape()) + " x " + shape_str(y.shape()));
  }
  const Shape lead_a(x.shape().begin(), x.shape().end() - 2);
  const Shape lead_b(y.shape().begin(), y.shape().end() - 2);
  Shape lead;
  if (lead_a == lead_b || lead_b.empty()) {
    lead = lead_a;
  } else if (lead_a.empty()) {
    lead = lead_b;
  } else {
    throw ShapeError("matmul: batch axes not broadcast-compatible: " + shape_str(x.shape()) + " x " +
                     shape_str(y.shape()));
  }
  const std::int64_t batches = shape_numel(lead);
  const bool a_batched = !lead_a.empty();
  const bool b_batched = !lead_b.empty();
  Shape out_shape = lead;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> out(out_shape);
  for (std::int64_t i = 0; i < batches; ++i) {
    detail::gemm<T>(false, false, m, n, k, T(1), x.ptr() + (a_batched ? i * m * k : 0),
                    y.ptr() + (b_batched ? i * k * n : 0), T(0), out.ptr() + i * m * n);
  }
  auto backward = [a, b, batches, a_batched, b_batched, m, n, k](Graph<T>& graph,
                                                                 const Tensor<T>& dout) {
    const Tensor<T>& x = a.value();
    const Tensor<T>& y = b.value();
    if (graph.requires_grad(a)) {
      Tensor<T>& da = graph.grad_buffer(a);
      for (std::int64_t i = 0; i < batches; ++i) {
        detail::gemm<T>(false, true, m, k, n, T(1), dout.ptr() + i * m * n,
                        y.ptr() + (b_batched ? i * k * n : 0), T(1),
                        da.ptr() + (a_batched ? i * m * k : 0));
      }
    }
    if (graph.requires_grad(b)) {
      Tensor<T>& db = graph.grad_buffer(b);
      for (std::int64_t i = 0; i < batches; ++i) {
        detail::gemm<T>(true, false, k, n, m, T(1), x.ptr() + (a_batched ? i * m * k : 0),
                        dout.ptr() + i * m * n, T(1), db.ptr() + (b_batched ? i * k * n : 0));
      }
    }
  };
  return a.graph().record(std::move(out), {a, b}, backward, "matmul");
}

template Var<float> matmul<float>(const Var<float>&, const Var<float>&);
template Var<double> matmul<double>(const Var<double>&, const Var<double>&);

}  // namespace trunet
