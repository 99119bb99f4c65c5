#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "edgeseg/tensor.hpp"

namespace edgeseg {

// Differentiable tensor operations. Every op checks shapes eagerly and
// throws ShapeError naming the offending extents. Broadcasting exists only
// between a tensor and a scalar; anything else needs an explicit op.

template <typename Scalar> Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor);
template <typename Scalar> Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar offset);

template <typename Scalar> Tensor<Scalar> relu(const Tensor<Scalar>& x);
/// Exact (erf-based) GELU.
template <typename Scalar> Tensor<Scalar> gelu(const Tensor<Scalar>& x);

/// [m x k] . [k x n] -> [m x n]
template <typename Scalar> Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
/// Rank-2 transpose.
template <typename Scalar> Tensor<Scalar> transpose(const Tensor<Scalar>& a);
template <typename Scalar> Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape);

/// Token-wise affine map: x [N x Cin] . w [Cin x Cout] + bias [Cout].
/// `bias` may be undefined.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias);

/// Cross-correlation of x [Cin x H x W] with w [Cout x Cin x kh x kw].
/// Output extents follow floor((H + 2 pad - kh) / stride) + 1.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, std::size_t stride, std::size_t pad);

/// Max pooling over k x k windows; padded cells never win.
template <typename Scalar>
Tensor<Scalar> max_pool2d(const Tensor<Scalar>& x, std::size_t kernel, std::size_t stride,
                          std::size_t pad);

/// Bilinear resize of [C x H x W] with half-pixel centers
/// (src = (dst + 0.5) * in / out - 0.5, clamped at the borders).
template <typename Scalar>
Tensor<Scalar> bilinear_resize(const Tensor<Scalar>& x, std::size_t out_h, std::size_t out_w);

/// Max-subtracted softmax along `axis`.
template <typename Scalar> Tensor<Scalar> softmax(const Tensor<Scalar>& x, std::size_t axis);

/// Normalizes each row of x [N x C], then applies gamma/beta [C].
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, Scalar eps = Scalar(1e-6));

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, std::size_t axis);
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, std::size_t axis, std::size_t start, std::size_t length);

template <typename Scalar> Tensor<Scalar> sum(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> mean(const Tensor<Scalar>& x);

/// Mean cross-entropy of class scores laid out [K x ...] against integer
/// labels, one per trailing position.
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const int> labels);

/// [C x H x W] -> [HW x C]
template <typename Scalar> Tensor<Scalar> to_tokens(const Tensor<Scalar>& x);
/// [HW x C] -> [C x H x W]
template <typename Scalar>
Tensor<Scalar> to_map(const Tensor<Scalar>& tokens, std::size_t height, std::size_t width);

}  // namespace edgeseg
