// Layout ops: concatenation, slicing, reshape and axis permutation.
#include <algorithm>
#include <array>
#include <numeric>

#include "trunet/errors.hpp"
#include "trunet/ops.hpp"

namespace trunet {

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: empty input list");
  const Shape& first = inputs.front().value().shape();
  if (first.size() != 4) throw ShapeError("concat_channels: expected 4-D inputs, got " + shape_str(first));
  std::int64_t channels = 0;
  for (const auto& v : inputs) {
    const Shape& s = v.value().shape();
    if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw ShapeError("concat_channels: " + shape_str(s) + " does not match " + shape_str(first) +
                       " in batch or spatial extent");
    }
    channels += s[1];
  }
  const std::int64_t n = first[0], hw = first[2] * first[3];
  Tensor<T> out({n, channels, first[2], first[3]});
  std::int64_t offset = 0;
  std::vector<std::int64_t> offsets;
  for (const auto& v : inputs) {
    const Tensor<T>& x = v.value();
    const std::int64_t c = x.dim(1);
    for (std::int64_t b = 0; b < n; ++b) {
      std::copy_n(x.ptr() + b * c * hw, c * hw, out.ptr() + (b * channels + offset) * hw);
    }
    offsets.push_back(offset);
    offset += c;
  }
  auto backward = [inputs, offsets, channels, n, hw](Graph<T>& graph, const Tensor<T>& dout) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!graph.requires_grad(inputs[i])) continue;
      Tensor<T>& dx = graph.grad_buffer(inputs[i]);
      const std::int64_t c = dx.dim(1);
      for (std::int64_t b = 0; b < n; ++b) {
        const T* src = dout.ptr() + (b * channels + offsets[i]) * hw;
        T* dst = dx.ptr() + b * c * hw;
        for (std::int64_t j = 0; j < c * hw; ++j) dst[j] += src[j];
      }
    }
  };
  return inputs.front().graph().record(std::move(out), inputs, backward, "concat_channels");
}

template <typename T>
Var<T> slice_channels(const Var<T>& input, std::int64_t begin, std::int64_t count) {
  const Tensor<T>& x = input.value();
  if (x.rank() != 4 || begin < 0 || count < 1 || begin + count > x.dim(1)) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") invalid for " + shape_str(x.shape()));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({n, count, x.dim(2), x.dim(3)});
  for (std::int64_t b = 0; b < n; ++b) {
    std::copy_n(x.ptr() + (b * c + begin) * hw, count * hw, out.ptr() + b * count * hw);
  }
  auto backward = [input, begin, count, n, c, hw](Graph<T>& graph, const Tensor<T>& dout) {
    Tensor<T>& dx = graph.grad_buffer(input);
    for (std::int64_t b = 0; b < n; ++b) {
      const T* src = dout.ptr() + b * count * hw;
      T* dst = dx.ptr() + (b * c + begin) * hw;
      for (std::int64_t j = 0; j < count * hw; ++j) dst[j] += src[j];
    }
  };
  return input.graph().record(std::move(out), {input}, backward, "slice_channels");
}

template <typename T>
Var<T> reshape(const Var<T>& input, Shape shape) {
  Tensor<T> out = input.value().reshaped(std::move(shape));
  auto backward = [input](Graph<T>& graph, const Tensor<T>& dout) {
    Tensor<T>& dx = graph.grad_buffer(input);
    for (std::int64_t i = 0; i < dout.numel(); ++i) dx[i] += dout[i];
  };
  return input.graph().record(std::move(out), {input}, backward, "reshape");
}

namespace {

void check_perm(const std::vector<int>& perm, std::size_t rank) {
  std::vector<int> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(rank);
  std::iota(expect.begin(), expect.end(), 0);
  if (sorted != expect) throw ShapeError("permute: invalid axis permutation for rank " + std::to_string(rank));
}

}  // namespace

template <typename T>
Tensor<T> permute_tensor(const Tensor<T>& input, const std::vector<int>& perm) {
  const std::size_t rank = input.rank();
  check_perm(perm, rank);
  // Pad to rank 4 so a single loop nest covers every case.
  std::array<std::int64_t, 4> in_stride{0, 0, 0, 0}, out_dim{1, 1, 1, 1}, src_stride{0, 0, 0, 0};
  std::int64_t s = 1;
  for (std::size_t i = rank; i-- > 0;) {
    in_stride[i] = s;
    s *= input.dim(i);
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = input.dim(static_cast<std::size_t>(perm[i]));
    out_dim[4 - rank + i] = out_shape[i];
    src_stride[4 - rank + i] = in_stride[static_cast<std::size_t>(perm[i])];
  }
  Tensor<T> out(out_shape);
  std::int64_t o = 0;
  for (std::int64_t i0 = 0; i0 < out_dim[0]; ++i0)
    for (std::int64_t i1 = 0; i1 < out_dim[1]; ++i1)
      for (std::int64_t i2 = 0; i2 < out_dim[2]; ++i2) {
        const std::int64_t base = i0 * src_stride[0] + i1 * src_stride[1] + i2 * src_stride[2];
        for (std::int64_t i3 = 0; i3 < out_dim[3]; ++i3) out[o++] = input[base + i3 * src_stride[3]];
      }
  return out;
}

template <typename T>
Var<T> permute(const Var<T>& input, const std::vector<int>& perm) {
  Tensor<T> out = permute_tensor(input.value(), perm);
  std::vector<int> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  auto backward = [input, inverse](Graph<T>& graph, const Tensor<T>& dout) {
    graph.accumulate(input, permute_tensor(dout, inverse));
  };
  return input.graph().record(std::move(out), {input}, backward, "permute");
}

#define TRUNET_INSTANTIATE(T)                                                      \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                  \
  template Var<T> slice_channels<T>(const Var<T>&, std::int64_t, std::int64_t);    \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                \
  template Tensor<T> permute_tensor<T>(const Tensor<T>&, const std::vector<int>&); \
  template Var<T> permute<T>(const Var<T>&, const std::vector<int>&);

TRUNET_INSTANTIATE(float)
TRUNET_INSTANTIATE(double)
#undef TRUNET_INSTANTIATE

}  // namespace trunet
