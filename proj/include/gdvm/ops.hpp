#pragma once

#include <cstddef>
#include <span>

#include "gdvm/tensor.hpp"

namespace gdvm {

// Differentiable tensor operations. Every op evaluates eagerly; when any
// attached input is present the op also records a node on that tape with the
// matching backward rule. Inputs without tape linkage (data batches, noise
// draws, dropout masks) act as constants and receive no gradient.

// [m x k] * [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

// Explicit spatial padding (top/left/bottom/right), used where the layer
// geometry requires the asymmetric "same" split for even kernels.
struct Padding2d {
  int top = 0;
  int left = 0;
  int bottom = 0;
  int right = 0;
};

// Cross-correlation (no kernel flip). Input is [c_in x h x w] or
// [n x c_in x h x w]; kernels are [c_out x c_in x kh x kw].
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding);
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, const Padding2d& pad);

// Per-window maximum over [c x h x w] or [n x c x h x w]; gradient routes to
// the first row-major argmax of each window.
Tensor maxpool2d(const Tensor& input, int window, int stride);

// Binary elementwise ops accept equal shapes or a one-element scalar on
// either side.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // DomainError on non-positive entries
Tensor sigmoid(const Tensor& x);
Tensor negate(const Tensor& x);
Tensor scale(const Tensor& x, double s);

// Pass-through inside [lo, hi], zero gradient outside; clipped entries are
// counted into *clip_count when provided.
Tensor clamp(const Tensor& x, double lo, double hi, std::size_t* clip_count = nullptr);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis);

// Same data, new shape (sizes must agree).
Tensor reshape(const Tensor& x, Shape shape);

// x[m x n] + b[n], broadcast over rows.
Tensor add_row_bias(const Tensor& x, const Tensor& b);
// x[(n x) c x h x w] + b[c], broadcast over batch and spatial dims.
Tensor add_channel_bias(const Tensor& x, const Tensor& b);

// Row-wise softmax / L2 normalization over [m x n]. The normalization guard
// adds 1e-12 to each row norm.
Tensor softmax_rows(const Tensor& x);
Tensor l2_normalize_rows(const Tensor& x);

}  // namespace gdvm
