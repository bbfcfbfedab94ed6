// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Every function validates shapes, computes the
// forward value eagerly and records its adjoint when a gradient is needed.
//
// Layout conventions:
//   * matrices are row-major; a leading batch axis is allowed where noted
//   * images are channels-last: [batch, height, width, channels]
//   * binary elementwise ops broadcast the right operand when its shape is a
//     trailing suffix of the left operand's shape, or when it holds one value

#pragma once

#include <span>
#include <vector>

#include "jigsaw/tensor.hpp"

namespace jigsaw::ad {

// [n,k]x[k,m], [b,n,k]x[k,m] (shared right operand), [b,n,k]x[b,k,m].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes of a rank-2 or rank-3 tensor.
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// Rejects non-positive entries with DomainError.
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
/// log(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& a);
/// Gradient passes only where lo <= a <= hi.
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor softmax(const Tensor& a);      // over the last axis
Tensor log_softmax(const Tensor& a);  // over the last axis

inline constexpr double kNormEps = 1e-5;

/// Normalizes over the last axis, then applies gamma and beta (both [C]).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kNormEps);
/// [B,H,W,C]: normalizes each channel of each image over its spatial
/// positions, then applies gamma and beta (both [C]).
Tensor channel_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    double eps = kNormEps);

/// x [B,H,W,Cin], w [k,k,Cin,Cout] with odd k; stride 1, zero padding k/2.
Tensor conv2d(const Tensor& x, const Tensor& w);
/// x [B,H,W,C], w [k,k,C]; one filter per channel, stride 1, zero padding k/2.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w);

/// Mean over every axis between the first and the last: [B,...,C] -> [B,C].
/// A rank-2 input [S,C] is treated as a single batch and yields [1,C].
Tensor global_avg_pool(const Tensor& x);
/// Same grouping as global_avg_pool, taking the maximum.
Tensor global_max_pool(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
/// Concatenation along axis 0.
Tensor concat(const std::vector<Tensor>& parts);
/// Selects slices along axis 0; indices may repeat.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor squared_norm(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace jigsaw::ad
