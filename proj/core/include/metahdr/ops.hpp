#pragma once

// Differentiable tensor operations.
//
// Every backward rule is itself written in terms of these operations, so
// gradients computed with `create_graph = true` are differentiable again.
// Image tensors use N x C x H x W layout. Any operation that produces a
// non-finite value throws NumericError naming the operation.

#include "metahdr/tensor.hpp"

#include <cstdint>

namespace metahdr {

enum class Activation { relu, sigmoid };

// Elementwise arithmetic. Binary operations require identical shapes.
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, double factor);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, double value);
/// a^p elementwise. Non-integer p requires a > 0.
template <class T> Tensor<T> pow_scalar(const Tensor<T>& a, double p);
/// |a|, with derivative sign(a) (0 at 0).
template <class T> Tensor<T> abs(const Tensor<T>& a);
/// max(a, floor). Derivative is 1 where a > floor and 0 elsewhere.
template <class T> Tensor<T> clamp_min(const Tensor<T>& a, double floor);

/// relu derivative at 0 is 0.
template <class T> Tensor<T> relu(const Tensor<T>& x);
template <class T> Tensor<T> sigmoid(const Tensor<T>& x);
template <class T> Tensor<T> activation(const Tensor<T>& x, Activation kind);

// Reductions and their adjoint broadcasts.
template <class T> Tensor<T> sum(const Tensor<T>& x);   // -> [1]
template <class T> Tensor<T> mean(const Tensor<T>& x);  // -> [1]
template <class T> Tensor<T> broadcast_scalar(const Tensor<T>& s, const Shape& shape);
/// [N,C,H,W] -> [C], summing over N, H, W.
template <class T> Tensor<T> channel_sum(const Tensor<T>& x);
/// [C] -> [N,C,H,W].
template <class T> Tensor<T> channel_broadcast(const Tensor<T>& v, const Shape& shape);
/// [N,C,H,W] -> [N,1,H,W], summing over C.
template <class T> Tensor<T> pixel_sum(const Tensor<T>& x);
/// [N,1,H,W] -> [N,C,H,W].
template <class T> Tensor<T> pixel_broadcast(const Tensor<T>& v, std::int64_t channels);

// Convolutions.
/// Cross-correlation with stride 1. Kernel 3 requires padding 1, kernel 1
/// requires padding 0; output spatial dims equal input spatial dims.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int padding);
/// Transposed convolution with a C x F x 2 x 2 kernel and stride 2; doubles H and W.
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

/// 2x2 max pool, stride 2. Gradient goes to the first maximum in row-major order.
template <class T> Tensor<T> maxpool2(const Tensor<T>& input);

/// Batch normalization with current-batch statistics (population variance).
template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, double eps);

template <class T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t count);

template <class T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

}  // namespace metahdr
