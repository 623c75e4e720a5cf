#pragma once

#include <functional>
#include <vector>

#include "ibra/tensor.hpp"

namespace ibra::kernels {

// Dense kernels shared by the training tape, the eval path and the reference
// side of the lowering verifier. Accumulation order is fixed (innermost index
// fastest) so repeated runs are bit-for-bit identical.

Shape conv2d_out_shape(const Shape& input, const Shape& weight, int stride, int padding);

// input [Cin,H,W] or [B,Cin,H,W]; weight [Cout,Cin,kh,kw].
Tensor conv2d(const Tensor& input, const Tensor& weight, int stride, int padding);
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape,
                         int stride, int padding);
Tensor conv2d_grad_weight(const Tensor& grad_out, const Tensor& input, const Shape& weight_shape,
                          int stride, int padding);

// input [n] or [B,n]; weight [m,n]; bias [m] or null.
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor* bias);
Tensor linear_grad_input(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape);
Tensor linear_grad_weight(const Tensor& grad_out, const Tensor& input, const Shape& weight_shape);
Tensor linear_grad_bias(const Tensor& grad_out, int64_t bias_len);

// Adds a per-channel bias to [B,C,H,W] (or [C,H,W]).
Tensor bias_channel(const Tensor& x, const Tensor& bias);
Tensor bias_channel_grad(const Tensor& grad_out, int64_t channels);

Tensor avg_pool2d(const Tensor& x, int k);
Tensor avg_pool2d_grad(const Tensor& grad_out, const Shape& input_shape, int k);

// Batch normalization over the batch (and spatial) axes; channel axis is 1
// for rank-4 input and the feature axis for rank-2.
struct BnStats {
    Tensor mean;  // [C]
    Tensor var;   // [C], biased
};
BnStats bn_batch_stats(const Tensor& x);
Tensor bn_normalize(const Tensor& x, const BnStats& stats, const Tensor& gamma, const Tensor& beta,
                    double eps);
void bn_backward(const Tensor& x, const BnStats& stats, const Tensor& gamma, double eps,
                 const Tensor& grad_out, Tensor& grad_x, Tensor& grad_gamma, Tensor& grad_beta);

// y = scale[c] * x + shift[c]; the eval-mode form of BN and of folded affine.
Tensor affine_channel(const Tensor& x, const Tensor& scale, const Tensor& shift);

Tensor pointwise(const Tensor& x, const std::function<double(double)>& fn);

// Mean cross entropy over rows of logits [B,K]; softmax saved for backward.
double cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels, Tensor& softmax_out);

}  // namespace ibra::kernels
