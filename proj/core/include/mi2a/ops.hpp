#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "mi2a/graph.hpp"

// Differentiable operations over Graph variables. Every op validates its input shapes and
// throws ShapeError on mismatch. Layout is channels-last: 1-D signals are (batch, length,
// channels) and images are (batch, height, width, channels).
namespace mi2a::ops {

enum class Padding { Same, Valid };

// -- elementwise ---------------------------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var square(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);

// -- reductions (result shape {1}) ---------------------------------------------------------
Var sum(Var a);
Var mean(Var a);
/// Mean of squared differences over all elements.
Var mse(Var a, Var b);

// -- shape plumbing ------------------------------------------------------------------------
Var reshape(Var a, Shape shape);
/// Concatenate along the last axis; leading extents must agree.
Var concat_last(Var a, Var b);
Var slice_last(Var a, std::size_t start, std::size_t length);
/// Box slice: out[i] = x[start + i] over every axis, out extents `size`.
Var crop(Var x, const Shape& start, const Shape& size);
/// (B, T, F) -> (B, F) at step t.
Var select_time(Var x, std::size_t t);
/// T tensors of (B, F) -> (B, T, F).
Var stack_time(const std::vector<Var>& steps);
/// (B, F) -> (B, T, F), same vector at every step.
Var repeat_time(Var x, std::size_t steps);

// -- linear algebra ------------------------------------------------------------------------
/// y = x W + b with x (M, in), W (in, out), b (out).
Var dense(Var x, Var weight, Var bias);
Var matmul(Var a, Var b);
/// (B, M, K) x (B, K, N) -> (B, M, N); with transpose_b, b is (B, N, K).
Var batched_matmul(Var a, Var b, bool transpose_b = false);
/// Numerically stable softmax (max-shifted) along `axis`.
Var softmax(Var x, std::size_t axis);

// -- convolution family --------------------------------------------------------------------
/// x (B, L, Cin), kernel (K, Cin, Cout), bias (Cout). Same padding gives ceil(L/stride).
Var conv1d(Var x, Var kernel, Var bias, std::size_t stride, Padding padding = Padding::Same);
/// x (B, H, W, Cin), kernel (KH, KW, Cin, Cout), bias (Cout).
Var conv2d(Var x, Var kernel, Var bias, std::size_t stride, Padding padding = Padding::Same);
/// Adjoint of conv1d. x (B, L, Cin), kernel (K, Cout, Cin); same padding gives L*stride.
Var conv1d_transpose(Var x, Var kernel, Var bias, std::size_t stride, Padding padding = Padding::Same);
/// x (B, H, W, Cin), kernel (KH, KW, Cout, Cin).
Var conv2d_transpose(Var x, Var kernel, Var bias, std::size_t stride, Padding padding = Padding::Same);
/// Non-overlapping max pooling; a trailing partial window is pooled (ceil mode).
Var maxpool1d(Var x, std::size_t window);
Var maxpool2d(Var x, std::size_t window);
/// Nearest-neighbour repetition along the spatial axes.
Var upsample1d(Var x, std::size_t factor);
Var upsample2d(Var x, std::size_t factor);

// -- recurrent -----------------------------------------------------------------------------
/// Packed LSTM weights: weight is (in + p, 4p) holding the input, forget, candidate and
/// output gate blocks in that order; bias is (4p).
struct LstmWeights {
  Var weight;
  Var bias;
};

/// One LSTM cell step. Returns (h', c') with h', c' of shape (B, p).
std::pair<Var, Var> lstm_step(Var x, Var h, Var c, const LstmWeights& w);

}  // namespace mi2a::ops
