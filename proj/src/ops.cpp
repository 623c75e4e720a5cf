#include "ibra/ops.hpp"

#include <utility>

#include "ibra/error.hpp"

namespace ibra::ops {

NodeId add(Tape& tape, NodeId a, NodeId b) {
    Tensor out = ibra::add(tape.value(a), tape.value(b));
    return tape.record("add", {a, b}, std::move(out),
                       [](const Tape&, const TapeEntry&, const Tensor& up) {
                           return std::vector<Tensor>{up, up};
                       });
}

NodeId scale(Tape& tape, NodeId x, double s) {
    Tensor out = mul_scalar(tape.value(x), s);
    return tape.record("scale", {x}, std::move(out),
                       [s](const Tape&, const TapeEntry&, const Tensor& up) {
                           return std::vector<Tensor>{mul_scalar(up, s)};
                       });
}

NodeId conv2d(Tape& tape, NodeId input, NodeId weight, int stride, int padding) {
    Tensor out = kernels::conv2d(tape.value(input), tape.value(weight), stride, padding);
    return tape.record(
        "conv2d", {input, weight}, std::move(out),
        [stride, padding](const Tape& t, const TapeEntry& e, const Tensor& up) {
            const Tensor& x = t.value(e.inputs[0]);
            const Tensor& w = t.value(e.inputs[1]);
            return std::vector<Tensor>{
                kernels::conv2d_grad_input(up, w, x.shape(), stride, padding),
                kernels::conv2d_grad_weight(up, x, w.shape(), stride, padding)};
        });
}

NodeId linear(Tape& tape, NodeId input, NodeId weight, NodeId bias) {
    const Tensor* b = bias == kNoNode ? nullptr : &tape.value(bias);
    Tensor out = kernels::linear(tape.value(input), tape.value(weight), b);
    std::vector<NodeId> ins = bias == kNoNode ? std::vector<NodeId>{input, weight}
                                              : std::vector<NodeId>{input, weight, bias};
    return tape.record(
        "linear", std::move(ins), std::move(out),
        [](const Tape& t, const TapeEntry& e, const Tensor& up) {
            const Tensor& x = t.value(e.inputs[0]);
            const Tensor& w = t.value(e.inputs[1]);
            std::vector<Tensor> grads;
            grads.push_back(kernels::linear_grad_input(up, w, x.shape()));
            grads.push_back(kernels::linear_grad_weight(up, x, w.shape()));
            if (e.inputs.size() == 3) grads.push_back(kernels::linear_grad_bias(up, w.dim(0)));
            return grads;
        });
}

NodeId bias_channel(Tape& tape, NodeId x, NodeId bias) {
    Tensor out = kernels::bias_channel(tape.value(x), tape.value(bias));
    return tape.record("bias_channel", {x, bias}, std::move(out),
                       [](const Tape& t, const TapeEntry& e, const Tensor& up) {
                           int64_t c = t.value(e.inputs[1]).numel();
                           return std::vector<Tensor>{up, kernels::bias_channel_grad(up, c)};
                       });
}

NodeId avg_pool2d(Tape& tape, NodeId x, int k) {
    Tensor out = kernels::avg_pool2d(tape.value(x), k);
    return tape.record("avg_pool2d", {x}, std::move(out),
                       [k](const Tape& t, const TapeEntry& e, const Tensor& up) {
                           const Shape& in_shape = t.value(e.inputs[0]).shape();
                           return std::vector<Tensor>{kernels::avg_pool2d_grad(up, in_shape, k)};
                       });
}

NodeId reshape(Tape& tape, NodeId x, Shape shape) {
    Tensor out = tape.value(x).reshaped(shape);
    return tape.record("reshape", {x}, std::move(out),
                       [](const Tape& t, const TapeEntry& e, const Tensor& up) {
                           return std::vector<Tensor>{up.reshaped(t.value(e.inputs[0]).shape())};
                       });
}

NodeId relu(Tape& tape, NodeId x) {
    Tensor out = kernels::pointwise(tape.value(x), [](double v) { return v > 0.0 ? v : 0.0; });
    return tape.record("relu", {x}, std::move(out),
                       [](const Tape& t, const TapeEntry& e, const Tensor& up) {
                           const Tensor& xin = t.value(e.inputs[0]);
                           Tensor g = Tensor::zeros(up.shape(), Dtype::Real);
                           auto gs = g.reals();
                           auto us = up.reals();
                           for (int64_t i = 0; i < xin.numel(); ++i)
                               gs[static_cast<size_t>(i)] =
                                   xin.value_at(i) > 0.0 ? us[static_cast<size_t>(i)] : 0.0;
                           return std::vector<Tensor>{std::move(g)};
                       });
}

NodeId clip(Tape& tape, NodeId x, double lo, double hi) {
    Tensor out = kernels::pointwise(
        tape.value(x), [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); });
    return tape.record("clip", {x}, std::move(out),
                       [lo, hi](const Tape& t, const TapeEntry& e, const Tensor& up) {
                           const Tensor& xin = t.value(e.inputs[0]);
                           Tensor g = Tensor::zeros(up.shape(), Dtype::Real);
                           auto gs = g.reals();
                           auto us = up.reals();
                           for (int64_t i = 0; i < xin.numel(); ++i) {
                               double v = xin.value_at(i);
                               gs[static_cast<size_t>(i)] =
                                   (v >= lo && v <= hi) ? us[static_cast<size_t>(i)] : 0.0;
                           }
                           return std::vector<Tensor>{std::move(g)};
                       });
}

NodeId custom_grad_apply(Tape& tape, NodeId x, PointwiseFn forward, PointwiseFn window) {
    Tensor out = kernels::pointwise(tape.value(x), forward);
    return tape.record("custom_grad", {x}, std::move(out),
                       [window = std::move(window)](const Tape& t, const TapeEntry& e,
                                                    const Tensor& up) {
                           const Tensor& xin = t.value(e.inputs[0]);
                           Tensor g = Tensor::zeros(up.shape(), Dtype::Real);
                           auto gs = g.reals();
                           auto us = up.reals();
                           for (int64_t i = 0; i < xin.numel(); ++i)
                               gs[static_cast<size_t>(i)] =
                                   us[static_cast<size_t>(i)] * window(xin.value_at(i));
                           return std::vector<Tensor>{std::move(g)};
                       });
}

NodeId batchnorm_train(Tape& tape, NodeId x, NodeId gamma, NodeId beta, double eps,
                       kernels::BnStats* stats_out) {
    if (eps <= 0.0) throw TensorError("batchnorm: eps must be > 0");
    kernels::BnStats stats = kernels::bn_batch_stats(tape.value(x));
    if (stats_out) *stats_out = stats;
    Tensor out = kernels::bn_normalize(tape.value(x), stats, tape.value(gamma), tape.value(beta), eps);
    return tape.record(
        "batchnorm", {x, gamma, beta}, std::move(out),
        [stats = std::move(stats), eps](const Tape& t, const TapeEntry& e, const Tensor& up) {
            Tensor gx, gg, gb;
            kernels::bn_backward(t.value(e.inputs[0]), stats, t.value(e.inputs[1]), eps, up, gx, gg,
                                 gb);
            return std::vector<Tensor>{std::move(gx), std::move(gg), std::move(gb)};
        });
}

NodeId affine_channel(Tape& tape, NodeId x, Tensor scale, Tensor shift) {
    Tensor out = kernels::affine_channel(tape.value(x), scale, shift);
    return tape.record("affine_channel", {x}, std::move(out),
                       [scale = std::move(scale)](const Tape&, const TapeEntry&, const Tensor& up) {
                           Tensor zero_shift = Tensor::zeros(scale.shape(), Dtype::Real);
                           return std::vector<Tensor>{
                               kernels::affine_channel(up, scale, zero_shift)};
                       });
}

NodeId cross_entropy_mean(Tape& tape, NodeId logits, std::vector<int> labels) {
    Tensor softmax;
    double loss = kernels::cross_entropy_mean(tape.value(logits), labels, softmax);
    return tape.record(
        "cross_entropy", {logits}, Tensor::scalar(loss),
        [softmax = std::move(softmax), labels = std::move(labels)](
            const Tape&, const TapeEntry&, const Tensor& up) {
            double u = up.reals()[0];
            int64_t bsz = softmax.dim(0), k = softmax.dim(1);
            Tensor g = softmax;
            auto gs = g.reals();
            double inv_b = 1.0 / static_cast<double>(bsz);
            for (int64_t b = 0; b < bsz; ++b) {
                for (int64_t j = 0; j < k; ++j) gs[static_cast<size_t>(b * k + j)] *= u * inv_b;
                gs[static_cast<size_t>(b * k + labels[static_cast<size_t>(b)])] -= u * inv_b;
            }
            return std::vector<Tensor>{std::move(g)};
        });
}

}  // namespace ibra::ops
