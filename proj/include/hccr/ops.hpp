#ifndef HCCR_OPS_HPP
#define HCCR_OPS_HPP

#include <span>

#include "hccr/rng.hpp"
#include "hccr/tensor.hpp"

namespace hccr {

// Differentiable tensor operations. Every op takes the tape it should record
// on; a node is recorded only when the tape is recording and some operand
// requires grad. Results are freshly allocated tensors (dropout in eval mode
// is the one exception: it returns its input unchanged).

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor square(Tape& tape, const Tensor& a);
Tensor scale(Tape& tape, const Tensor& a, double c);

/// a: m x n, bias: n. Adds bias to every row.
Tensor add_row_bias(Tape& tape, const Tensor& a, const Tensor& bias);

/// a: m x k, b: k x n -> m x n.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// input: N x C x H x W, kernels: F x C x kh x kw, bias: F.
/// Cross-correlation (no kernel flip). H' = (H + 2*padding - kh)/stride + 1.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::int64_t stride, std::int64_t padding);

/// 2x2 window, stride 2. H and W must be even. Backward routes each output
/// gradient to the first row-major argmax of its window.
Tensor maxpool2d(Tape& tape, const Tensor& input);

/// f(v) = v for v >= 0, slope*v otherwise; derivative at 0 is taken as 1.
Tensor leaky_relu(Tape& tape, const Tensor& a, double slope = 0.01);

enum class DropoutMode { kTrain, kEval };

/// Inverted dropout: eval mode is the identity; train mode zeroes elements
/// with probability drop_prob and scales survivors by 1/(1-drop_prob).
/// The mask is drawn from rng in row-major order and saved for backward.
Tensor dropout(Tape& tape, const Tensor& a, double drop_prob, DropoutMode mode, RngStream& rng);

/// Reduction over the listed axes (deduplicated, each in [0, rank)).
/// Reducing every axis yields a rank-0 scalar.
Tensor reduce_sum(Tape& tape, const Tensor& a, std::span<const int> axes);
Tensor reduce_mean(Tape& tape, const Tensor& a, std::span<const int> axes);

/// Reduction over all axes.
Tensor reduce_sum(Tape& tape, const Tensor& a);
Tensor reduce_mean(Tape& tape, const Tensor& a);

/// Same data, new extents (element count must match).
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);

}  // namespace hccr

#endif
