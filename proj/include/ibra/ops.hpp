#pragma once

#include <functional>
#include <vector>

#include "ibra/autograd.hpp"
#include "ibra/kernels.hpp"

namespace ibra::ops {

using PointwiseFn = std::function<double(double)>;

NodeId add(Tape& tape, NodeId a, NodeId b);
NodeId scale(Tape& tape, NodeId x, double s);

NodeId conv2d(Tape& tape, NodeId input, NodeId weight, int stride, int padding);
NodeId linear(Tape& tape, NodeId input, NodeId weight, NodeId bias);
NodeId bias_channel(Tape& tape, NodeId x, NodeId bias);
NodeId avg_pool2d(Tape& tape, NodeId x, int k);
NodeId reshape(Tape& tape, NodeId x, Shape shape);

NodeId relu(Tape& tape, NodeId x);
NodeId clip(Tape& tape, NodeId x, double lo, double hi);

// Applies `forward` pointwise; the backward pass multiplies the upstream
// gradient by `window(x)` elementwise, ignoring the true derivative of
// `forward`. This is the straight-through hook the spike nonlinearities use.
NodeId custom_grad_apply(Tape& tape, NodeId x, PointwiseFn forward, PointwiseFn window);

// Training-mode batch normalization; batch statistics are written to
// `stats_out` so the caller can update running averages.
NodeId batchnorm_train(Tape& tape, NodeId x, NodeId gamma, NodeId beta, double eps,
                       kernels::BnStats* stats_out);

// y = scale[c]*x + shift[c] with constant scale/shift (eval-mode BN).
NodeId affine_channel(Tape& tape, NodeId x, Tensor scale, Tensor shift);

NodeId cross_entropy_mean(Tape& tape, NodeId logits, std::vector<int> labels);

}  // namespace ibra::ops
