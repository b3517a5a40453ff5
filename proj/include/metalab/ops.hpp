#pragma once

// Differentiable primitives. Each one validates shapes, computes its forward
// result and registers an exact reverse-mode rule.

#include <cstddef>
#include <span>
#include <vector>

#include "metalab/tensor.hpp"

namespace metalab {

// Elementwise; shapes must match exactly (no broadcasting).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);

// Sum / mean of every element -> shape [1].
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
// Slice [start, start + length) along `axis`.
template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);
// All inputs agree on every axis except `axis`.
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

// [m x k] . [k x n]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// [B x m x k] . [B x k x n]
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);
// x [n x in], weight [out x in], bias [out] (may be undefined) -> x . weight^T + bias.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// x [N x Cin x H x W], weight [Cout x Cin/groups x k x k], bias [Cout] (may be
// undefined). Cross-correlation computed independently per channel group.
template <typename T>
Tensor<T> grouped_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                         std::size_t groups, std::size_t stride, std::size_t padding);

// Per-channel standardization over every axis except 1, using the statistics
// of this batch (biased variance), followed by the affine map. Input rank >= 2.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

// Windowed max over [N x C x H x W]; output spatial floor((H - k) / stride) + 1.
// Gradient goes to the first maximal element in row-major window order.
template <typename T> Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t k, std::size_t stride);
// [N x C x H x W] -> [N x C], same tie-break.
template <typename T> Tensor<T> global_max_pool2d(const Tensor<T>& x);

// v [n x d] -> [n x n] or [B x n x d] -> [B x n x n]; D[i][j] = sum_k |v_ik - v_jk|.
template <typename T> Tensor<T> pairwise_l1(const Tensor<T>& v);
// v [B x n x d] -> [B * n(n-1)/2 x d] with rows |v_i - v_j| for i < j, batch-major,
// pairs in row-major upper-triangle order.
template <typename T> Tensor<T> pair_abs_diff(const Tensor<T>& v);
// Inverse layout of pair_abs_diff for scalars: s [B * n(n-1)/2] (or [.. x 1])
// -> symmetric [B x n x n] with `diagonal` on the diagonal.
template <typename T>
Tensor<T> pairs_to_symmetric(const Tensor<T>& s, std::size_t batch, std::size_t n, T diagonal);
// e [.. x n x n]: copy with the diagonal set to `value` (no gradient there).
template <typename T> Tensor<T> set_diagonal(const Tensor<T>& e, T value);
// e [.. x n]: each row divided by its sum. Rows must have positive sums.
template <typename T> Tensor<T> row_normalize(const Tensor<T>& e);

// Mean over rows of -log softmax(logits)[label]; logits [n x K].
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

// Constant [n x K] one-hot matrix.
template <typename T> Tensor<T> one_hot(std::span<const int> labels, std::size_t classes);

}  // namespace metalab
