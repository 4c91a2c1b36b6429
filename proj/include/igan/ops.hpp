#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "igan/tensor.hpp"

// Differentiable tensor operations. Each op records a backward rule on the
// active tape (see TapeScope) when any input requires grad.
//
// Reductions (sum, mean, matmul inner products through BLAS aside) iterate
// in increasing flat-index order and accumulate in double, so repeated runs
// produce identical results.

namespace igan {

enum class UnaryOp { Neg, Exp, Log, Tanh, Sigmoid, Relu, Square, Softplus };
enum class BinaryOp { Add, Sub, Mul, Div };

/// Shapes must match exactly, except that `b` may hold a single element.
template <typename T>
Tensor<T> elementwise(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> elementwise(UnaryOp op, const Tensor<T>& a);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::Add, a, b); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::Sub, a, b); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::Mul, a, b); }
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryOp::Div, a, b); }

template <typename T>
Tensor<T> neg(const Tensor<T>& a) { return elementwise(UnaryOp::Neg, a); }
template <typename T>
Tensor<T> exp(const Tensor<T>& a) { return elementwise(UnaryOp::Exp, a); }
template <typename T>
Tensor<T> log(const Tensor<T>& a) { return elementwise(UnaryOp::Log, a); }
template <typename T>
Tensor<T> tanh(const Tensor<T>& a) { return elementwise(UnaryOp::Tanh, a); }
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) { return elementwise(UnaryOp::Sigmoid, a); }
template <typename T>
Tensor<T> relu(const Tensor<T>& a) { return elementwise(UnaryOp::Relu, a); }
template <typename T>
Tensor<T> square(const Tensor<T>& a) { return elementwise(UnaryOp::Square, a); }
/// log(1 + e^x), evaluated without overflow.
template <typename T>
Tensor<T> softplus(const Tensor<T>& a) { return elementwise(UnaryOp::Softplus, a); }

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope);
/// Gradient passes only where lo < x < hi.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T value);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);
/// (N, d1, d2, ...) -> (N, d1*d2*...).
template <typename T>
Tensor<T> flatten(const Tensor<T>& a);

/// Adds bias[C] along the last axis.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias);

/// Concatenation along the last (channel) axis in argument order. All
/// leading extents must agree.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  return concat_channels(std::span<const Tensor<T>>(parts));
}
/// Inverse of concat_channels.
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& a, std::span<const std::size_t> sizes);

/// Row-wise log-softmax of a (N, K) tensor.
template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a);

}  // namespace igan
