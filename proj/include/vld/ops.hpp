#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vld/tensor.hpp"

// Differentiable primitives. Every function records its backward closure when
// any input requires a gradient. Binary elementwise ops broadcast numpy-style
// (shapes aligned at the trailing axis).
namespace vld::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
// log(1 + exp(x)), evaluated without overflow.
Tensor softplus(const Tensor& x);
// GELU, tanh approximation.
Tensor gelu(const Tensor& x);
// Gradient is zero where the clamp is active.
Tensor clamp_max(const Tensor& x, double upper);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

Tensor sum(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

/// Matrix product over the last two axes.
///
/// Accepted forms: [M,K]x[K,N]; [B,M,K]x[B,K,N]; [...,K]x[K,N] (leading axes
/// folded into rows). With transpose_b the right operand is read as its
/// transpose, i.e. [N,K] or [B,N,K].
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

/// x·W + b over the last axis; W is [in,out], b is [out] or undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

/// Row softmax over a 2-D tensor restricted to entries where mask is nonzero;
/// masked-out entries are 0. Every row must keep at least one entry.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> mask);

/// Normalises the last axis to zero mean and unit variance (eps inside the
/// square root), then applies gain and bias of length D.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Unit L2 norm along the last axis: x / max(||x||, eps).
Tensor l2_normalize(const Tensor& x, double eps = 1e-12);

/// out[i] = x[i, index[i]] for a 2-D x.
Tensor pick(const Tensor& x, std::span<const std::size_t> index);

/// Euclidean distance matrix between the rows of a 2-D tensor. The diagonal
/// is zero and contributes no gradient.
Tensor pairwise_euclidean(const Tensor& x);

}  // namespace vld::ops
