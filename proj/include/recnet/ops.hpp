#pragma once

#include <vector>

#include "recnet/autograd.hpp"

// Differentiable primitives. Feature maps are (batch, height, width, channels).
// Convolution kernels are (kh, kw, in_channels, out_channels); depthwise
// kernels are (kh, kw, channels). All spatial convolutions use odd kernels
// with zero padding that preserves height and width.
namespace recnet::ops {

// --- elementwise -----------------------------------------------------------

/// a + b where b is either a's shape or broadcastable to it (every dim of b
/// equal to a's or 1, same rank).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// a * b with the same broadcasting rule as add().
Var mul(const Var& a, const Var& b);
/// Elementwise a / b, same shapes.
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// 1 - a.
Var one_minus(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);
/// Clamps to [lo, hi]; the gradient passes through on the closed interval.
Var clamp(const Var& a, double lo, double hi);
/// y = x * scale[c] + shift[c] with constant per-channel coefficients.
Var channel_affine(const Var& x, const std::vector<double>& scale, const std::vector<double>& shift);

// --- reductions ------------------------------------------------------------

Var sum(const Var& a);
Var mean(const Var& a);
/// Per-pixel max / mean over channels: (B,H,W,C) -> (B,H,W,1).
Var channel_max(const Var& x);
Var channel_mean(const Var& x);
/// Global average pool: (B,H,W,C) -> (B,1,1,C).
Var spatial_mean(const Var& x);

// --- structure -------------------------------------------------------------

Var concat_channels(const std::vector<Var>& parts);

// --- convolution -----------------------------------------------------------

/// Standard convolution, stride 1, same padding. `bias` may be undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias);
/// Per-channel convolution, stride 1, same padding. `bias` may be undefined.
Var depthwise_conv2d(const Var& x, const Var& weight, const Var& bias);
/// 2x2 max pooling with stride 2 (floor on odd sizes).
Var max_pool2x2(const Var& x);

// --- normalization and attention -------------------------------------------

/// Per-sample, per-channel standardization over spatial positions with
/// biased variance and no affine. Constant channels map to exactly zero.
Var instance_norm(const Var& x, double eps = 1e-5);

/// Channel-wise multi-head attention. Each input is viewed as
/// (batch, positions, channels) and split into `heads` groups of width d.
/// Per head: P = softmax_rows(Q^T K / temperature) is d x d and the output is
/// out[n, i] = sum_j P[i, j] V[n, j].
Var channel_attention(const Var& q, const Var& k, const Var& v, int heads, double temperature);

/// The per-head attention matrices for inspection, shape (batch, heads, d, d).
Tensor channel_attention_weights(const Tensor& q, const Tensor& k, int heads, double temperature);

// --- loss helpers ----------------------------------------------------------

/// Mean of (a - b)^2 over all elements.
Var mse(const Var& a, const Var& b);
/// Mean of |a - b| over all elements.
Var l1_mean(const Var& a, const Var& b);
/// Per-sample cross correlation (1 / positions) * A^T B where A, B are the
/// (positions x channels) flattenings. (B,H,W,C) x2 -> (B,C,C).
Var gram_cross(const Var& a, const Var& b);

}  // namespace recnet::ops
