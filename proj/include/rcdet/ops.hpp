#pragma once

#include <vector>

#include "rcdet/tensor.hpp"

namespace rcdet {

// Elementwise arithmetic. Binary ops accept equal shapes, or one operand whose
// shape is a trailing suffix of the other's (it is then repeated over the
// leading dimensions, e.g. bias rows over a matrix). Anything else → DimError.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp_t(const Tensor& x);
Tensor log_t(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor abs_t(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
// x^p on x >= 0; the x=0 subgradient is 0 for p != 1.
Tensor pow_scalar(const Tensor& x, double p);

Tensor softmax(const Tensor& x, long axis);
// Normalizes the last axis; gamma/beta have that axis's extent.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-8);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<long>& axes);
Tensor transpose(const Tensor& x);  // 2D
Tensor slice(const Tensor& x, long axis, long start, long len);
Tensor concat(const std::vector<Tensor>& xs, long axis);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// out = x @ w, 2D operands with matching inner extent.
Tensor matmul(const Tensor& a, const Tensor& b);
// out[..., out_f] = x[..., in_f] @ w[in_f, out_f] + b; bias optional (pass undefined Tensor).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor gather_rows(const Tensor& x, const std::vector<long>& rows);

// Grouped max over points sharing a cell: feats is [K x C], cells[k] names the
// target row in [0, num_cells). Cells no point maps to stay zero. All-zero
// input rows are the caller's padding concern, not handled here.
Tensor pillar_scatter_max(const Tensor& feats, const std::vector<long>& cells, long num_cells);

// x [C_in x H x W], w [C_out x C_in x kh x kw], optional bias [C_out].
Tensor strided_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, long stride, long pad);
// Nearest-neighbor [C x H x W] -> [C x 2H x 2W].
Tensor upsample2x(const Tensor& x);

// Per input column j and frequency f: sin(x_j * w_f), cos(x_j * w_f) with
// w_f = 2*pi * base^(-f / num_freqs). Output columns grouped per input axis.
Tensor sincos(const Tensor& x, long num_freqs, double base = 10000.0);

}  // namespace rcdet
