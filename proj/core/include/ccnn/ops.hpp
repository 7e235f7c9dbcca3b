#pragma once

#include <span>

#include "ccnn/tensor.hpp"

namespace ccnn {

// All operations run eagerly and, when a tape is active and any operand
// requires gradients, record their backward rule on the current tape.
// Shapes are explicit; the only broadcast is the bias-add over rows.

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_bias_rows(const Tensor& x, const Tensor& bias);
Tensor elementwise_mul(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.1);
Tensor log_elem(const Tensor& x);
Tensor clamp_min(const Tensor& x, double floor);
Tensor softmax_lastdim(const Tensor& x);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum_all(const Tensor& x);

// output[j] = bias + sum_t kernel[t]^T x_padded[j+t] with k-1 zero rows
// prepended, so output[j] depends on x[0..j] only.
Tensor causal_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

// 3-D conv over an HxWxC image with edge-replicate padding; used by the
// vision encoder (constant input stays constant across positions).
Tensor conv2d_replicate(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                        int stride, int pad);

// Row lookup with additive scatter on backward.
Tensor gather_rows(const Tensor& table, std::span<const int> ids);

// out[j] = x[j, ids[j]].
Tensor take_per_row(const Tensor& x, std::span<const int> ids);

}  // namespace ccnn
