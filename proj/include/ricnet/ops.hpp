#pragma once

#include <cstddef>
#include <vector>

#include "ricnet/tensor.hpp"

// Differentiable primitives. Binary elementwise ops broadcast numpy-style
// (trailing dimensions aligned, extent 1 stretches).
namespace ricnet {

enum class Padding { same, valid };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);

// (..., m, k) x (k, n), or batched (B..., m, k) x (B..., k, n) with equal
// leading extents.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
// Swap the last two axes.
Tensor transpose(const Tensor& x);
Tensor slice(const Tensor& x, std::ptrdiff_t axis, std::size_t start, std::size_t length);
Tensor concat(const std::vector<Tensor>& parts, std::ptrdiff_t axis);

Tensor softmax(const Tensor& x, std::ptrdiff_t axis);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Mean of squared differences over all elements.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Normalizes over the last axis: (x - mean) / sqrt(var + eps) * gain + shift.
// `gain` and `shift` have the extent of the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps);

// Cross-correlation over time. x: (B, T, C), weight: (K, C, F), bias: (F).
// `same` pads floor((K-1)/2) on the left and the rest on the right.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, Padding padding);

// LSTM recurrence with zero initial state. projected: (B, T, 4u), the input
// projection plus bias in gate order [i, f, g, o]; recurrent: (u, 4u).
// Returns (B, T, 2u) holding [h_t, c_t] per step. One tape node; backward
// runs BPTT internally.
Tensor lstm_scan(const Tensor& projected, const Tensor& recurrent);

}  // namespace ricnet
