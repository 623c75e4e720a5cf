#include "ibra/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "ibra/error.hpp"

namespace ibra::kernels {

namespace {

// Views a rank-3 tensor as batch 1 so the conv/pool loops only handle rank 4.
Shape batched(const Shape& s) {
    Shape b = s;
    b.insert(b.begin(), 1);
    return b;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw TensorError(msg);
}

}  // namespace

Shape conv2d_out_shape(const Shape& input, const Shape& weight, int stride, int padding) {
    require(stride >= 1, "conv2d: stride must be >= 1");
    require(padding >= 0, "conv2d: padding must be >= 0");
    require(weight.size() == 4, "conv2d: weight must be rank 4, got " + shape_str(weight));
    bool has_batch = input.size() == 4;
    require(has_batch || input.size() == 3,
            "conv2d: input must be rank 3 or 4, got " + shape_str(input));
    Shape in = has_batch ? input : batched(input);
    int64_t cin = in[1], h = in[2], w = in[3];
    int64_t cout = weight[0], wcin = weight[1], kh = weight[2], kw = weight[3];
    require(cin == wcin, "conv2d: input " + shape_str(input) + " has " + std::to_string(cin) +
                             " channels but weight " + shape_str(weight) + " expects " +
                             std::to_string(wcin));
    int64_t oh = (h + 2 * padding - kh) / stride + 1;
    int64_t ow = (w + 2 * padding - kw) / stride + 1;
    require(h + 2 * padding >= kh && w + 2 * padding >= kw,
            "conv2d: kernel " + shape_str(weight) + " larger than padded input " + shape_str(input));
    if (has_batch) return {in[0], cout, oh, ow};
    return {cout, oh, ow};
}

Tensor conv2d(const Tensor& input, const Tensor& weight, int stride, int padding) {
    Shape out_shape = conv2d_out_shape(input.shape(), weight.shape(), stride, padding);
    bool has_batch = input.rank() == 4;
    Shape in_s = has_batch ? input.shape() : batched(input.shape());
    int64_t bsz = in_s[0], cin = in_s[1], h = in_s[2], w = in_s[3];
    int64_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    int64_t oh = (h + 2 * padding - kh) / stride + 1;
    int64_t ow = (w + 2 * padding - kw) / stride + 1;

    Tensor out = Tensor::zeros(out_shape, Dtype::Real);
    auto o = out.reals();
    auto ws = weight.reals();
    const Tensor in_real = input.to_real();
    auto xs = in_real.reals();

    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t co = 0; co < cout; ++co)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (int64_t ci = 0; ci < cin; ++ci)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                int64_t iy = oy * stride + ky - padding;
                                int64_t ix = ox * stride + kx - padding;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += ws[static_cast<size_t>(((co * cin + ci) * kh + ky) * kw + kx)] *
                                       xs[static_cast<size_t>(((b * cin + ci) * h + iy) * w + ix)];
                            }
                    o[static_cast<size_t>(((b * cout + co) * oh + oy) * ow + ox)] = acc;
                }
    return out;
}

Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape,
                         int stride, int padding) {
    bool has_batch = input_shape.size() == 4;
    Shape in_s = has_batch ? input_shape : batched(input_shape);
    Shape go_s = has_batch ? grad_out.shape() : batched(grad_out.shape());
    int64_t bsz = in_s[0], cin = in_s[1], h = in_s[2], w = in_s[3];
    int64_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    int64_t oh = go_s[2], ow = go_s[3];

    Tensor gin = Tensor::zeros(input_shape, Dtype::Real);
    auto gi = gin.reals();
    auto go = grad_out.reals();
    auto ws = weight.reals();

    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t co = 0; co < cout; ++co)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double g = go[static_cast<size_t>(((b * cout + co) * oh + oy) * ow + ox)];
                    for (int64_t ci = 0; ci < cin; ++ci)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                int64_t iy = oy * stride + ky - padding;
                                int64_t ix = ox * stride + kx - padding;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                gi[static_cast<size_t>(((b * cin + ci) * h + iy) * w + ix)] +=
                                    g * ws[static_cast<size_t>(((co * cin + ci) * kh + ky) * kw + kx)];
                            }
                }
    return gin;
}

Tensor conv2d_grad_weight(const Tensor& grad_out, const Tensor& input, const Shape& weight_shape,
                          int stride, int padding) {
    bool has_batch = input.rank() == 4;
    Shape in_s = has_batch ? input.shape() : batched(input.shape());
    Shape go_s = has_batch ? grad_out.shape() : batched(grad_out.shape());
    int64_t bsz = in_s[0], cin = in_s[1], h = in_s[2], w = in_s[3];
    int64_t cout = weight_shape[0], kh = weight_shape[2], kw = weight_shape[3];
    int64_t oh = go_s[2], ow = go_s[3];

    Tensor gw = Tensor::zeros(weight_shape, Dtype::Real);
    auto g = gw.reals();
    auto go = grad_out.reals();
    const Tensor in_real = input.to_real();
    auto xs = in_real.reals();

    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t co = 0; co < cout; ++co)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double gv = go[static_cast<size_t>(((b * cout + co) * oh + oy) * ow + ox)];
                    for (int64_t ci = 0; ci < cin; ++ci)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                int64_t iy = oy * stride + ky - padding;
                                int64_t ix = ox * stride + kx - padding;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                g[static_cast<size_t>(((co * cin + ci) * kh + ky) * kw + kx)] +=
                                    gv * xs[static_cast<size_t>(((b * cin + ci) * h + iy) * w + ix)];
                            }
                }
    return gw;
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor* bias) {
    require(weight.rank() == 2, "linear: weight must be rank 2, got " + shape_str(weight.shape()));
    bool has_batch = input.rank() == 2;
    require(has_batch || input.rank() == 1,
            "linear: input must be rank 1 or 2, got " + shape_str(input.shape()));
    int64_t m = weight.dim(0), n = weight.dim(1);
    int64_t bsz = has_batch ? input.dim(0) : 1;
    int64_t in_n = has_batch ? input.dim(1) : input.dim(0);
    require(in_n == n, "linear: input " + shape_str(input.shape()) + " does not match weight " +
                           shape_str(weight.shape()));
    if (bias) require(bias->numel() == m, "linear: bias " + shape_str(bias->shape()) +
                                              " does not match weight rows " + std::to_string(m));

    Tensor out = Tensor::zeros(has_batch ? Shape{bsz, m} : Shape{m}, Dtype::Real);
    auto o = out.reals();
    auto ws = weight.reals();
    const Tensor in_real = input.to_real();
    auto xs = in_real.reals();
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t i = 0; i < m; ++i) {
            double acc = bias ? bias->reals()[static_cast<size_t>(i)] : 0.0;
            for (int64_t j = 0; j < n; ++j)
                acc += ws[static_cast<size_t>(i * n + j)] * xs[static_cast<size_t>(b * n + j)];
            o[static_cast<size_t>(b * m + i)] = acc;
        }
    return out;
}

Tensor linear_grad_input(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape) {
    bool has_batch = input_shape.size() == 2;
    int64_t m = weight.dim(0), n = weight.dim(1);
    int64_t bsz = has_batch ? input_shape[0] : 1;
    Tensor gin = Tensor::zeros(input_shape, Dtype::Real);
    auto gi = gin.reals();
    auto go = grad_out.reals();
    auto ws = weight.reals();
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t i = 0; i < m; ++i)
                acc += go[static_cast<size_t>(b * m + i)] * ws[static_cast<size_t>(i * n + j)];
            gi[static_cast<size_t>(b * n + j)] = acc;
        }
    return gin;
}

Tensor linear_grad_weight(const Tensor& grad_out, const Tensor& input, const Shape& weight_shape) {
    bool has_batch = input.rank() == 2;
    int64_t m = weight_shape[0], n = weight_shape[1];
    int64_t bsz = has_batch ? input.dim(0) : 1;
    Tensor gw = Tensor::zeros(weight_shape, Dtype::Real);
    auto g = gw.reals();
    auto go = grad_out.reals();
    const Tensor in_real = input.to_real();
    auto xs = in_real.reals();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t b = 0; b < bsz; ++b)
                acc += go[static_cast<size_t>(b * m + i)] * xs[static_cast<size_t>(b * n + j)];
            g[static_cast<size_t>(i * n + j)] = acc;
        }
    return gw;
}

Tensor linear_grad_bias(const Tensor& grad_out, int64_t bias_len) {
    bool has_batch = grad_out.rank() == 2;
    int64_t bsz = has_batch ? grad_out.dim(0) : 1;
    Tensor gb = Tensor::zeros({bias_len}, Dtype::Real);
    auto g = gb.reals();
    auto go = grad_out.reals();
    for (int64_t i = 0; i < bias_len; ++i) {
        double acc = 0.0;
        for (int64_t b = 0; b < bsz; ++b) acc += go[static_cast<size_t>(b * bias_len + i)];
        g[static_cast<size_t>(i)] = acc;
    }
    return gb;
}

Tensor bias_channel(const Tensor& x, const Tensor& bias) {
    bool has_batch = x.rank() == 4;
    require(has_batch || x.rank() == 3,
            "bias_channel: input must be rank 3 or 4, got " + shape_str(x.shape()));
    Shape s = has_batch ? x.shape() : batched(x.shape());
    int64_t bsz = s[0], c = s[1], hw = s[2] * s[3];
    require(bias.numel() == c, "bias_channel: bias " + shape_str(bias.shape()) +
                                   " does not match channels " + std::to_string(c));
    Tensor out = x.to_real();
    auto o = out.reals();
    auto bv = bias.reals();
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t i = 0; i < hw; ++i)
                o[static_cast<size_t>((b * c + ci) * hw + i)] += bv[static_cast<size_t>(ci)];
    return out;
}

Tensor bias_channel_grad(const Tensor& grad_out, int64_t channels) {
    bool has_batch = grad_out.rank() == 4;
    Shape s = has_batch ? grad_out.shape() : batched(grad_out.shape());
    int64_t bsz = s[0], c = s[1], hw = s[2] * s[3];
    Tensor gb = Tensor::zeros({channels}, Dtype::Real);
    auto g = gb.reals();
    auto go = grad_out.reals();
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t i = 0; i < hw; ++i)
                g[static_cast<size_t>(ci)] += go[static_cast<size_t>((b * c + ci) * hw + i)];
    return gb;
}

Tensor avg_pool2d(const Tensor& x, int k) {
    bool has_batch = x.rank() == 4;
    require(has_batch || x.rank() == 3,
            "avg_pool2d: input must be rank 3 or 4, got " + shape_str(x.shape()));
    Shape s = has_batch ? x.shape() : batched(x.shape());
    int64_t bsz = s[0], c = s[1], h = s[2], w = s[3];
    require(k >= 1 && h % k == 0 && w % k == 0,
            "avg_pool2d: spatial dims " + shape_str(x.shape()) + " not divisible by " +
                std::to_string(k));
    int64_t oh = h / k, ow = w / k;
    Shape out_shape = has_batch ? Shape{bsz, c, oh, ow} : Shape{c, oh, ow};
    Tensor out = Tensor::zeros(out_shape, Dtype::Real);
    auto o = out.reals();
    const Tensor xr = x.to_real();
    auto xs = xr.reals();
    double inv = 1.0 / (static_cast<double>(k) * k);
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double acc = 0.0;
                    for (int64_t dy = 0; dy < k; ++dy)
                        for (int64_t dx = 0; dx < k; ++dx)
                            acc += xs[static_cast<size_t>(
                                ((b * c + ci) * h + oy * k + dy) * w + ox * k + dx)];
                    o[static_cast<size_t>(((b * c + ci) * oh + oy) * ow + ox)] = acc * inv;
                }
    return out;
}

Tensor avg_pool2d_grad(const Tensor& grad_out, const Shape& input_shape, int k) {
    bool has_batch = input_shape.size() == 4;
    Shape s = has_batch ? input_shape : batched(input_shape);
    int64_t bsz = s[0], c = s[1], h = s[2], w = s[3];
    int64_t oh = h / k, ow = w / k;
    Tensor gin = Tensor::zeros(input_shape, Dtype::Real);
    auto gi = gin.reals();
    auto go = grad_out.reals();
    double inv = 1.0 / (static_cast<double>(k) * k);
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double g = go[static_cast<size_t>(((b * c + ci) * oh + oy) * ow + ox)] * inv;
                    for (int64_t dy = 0; dy < k; ++dy)
                        for (int64_t dx = 0; dx < k; ++dx)
                            gi[static_cast<size_t>(
                                ((b * c + ci) * h + oy * k + dy) * w + ox * k + dx)] += g;
                }
    return gin;
}

namespace {

// Channel geometry for BN: rank-2 -> [B, C], rank-4 -> [B, C, H*W].
struct ChannelView {
    int64_t batch, channels, inner;
};

ChannelView channel_view(const Shape& s) {
    if (s.size() == 2) return {s[0], s[1], 1};
    if (s.size() == 4) return {s[0], s[1], s[2] * s[3]};
    throw TensorError("batchnorm: input must be rank 2 or 4, got " + shape_str(s));
}

}  // namespace

BnStats bn_batch_stats(const Tensor& x) {
    ChannelView v = channel_view(x.shape());
    BnStats st{Tensor::zeros({v.channels}, Dtype::Real), Tensor::zeros({v.channels}, Dtype::Real)};
    auto mean = st.mean.reals();
    auto var = st.var.reals();
    auto xs = x.reals();
    double m = static_cast<double>(v.batch * v.inner);
    for (int64_t c = 0; c < v.channels; ++c) {
        double acc = 0.0;
        for (int64_t b = 0; b < v.batch; ++b)
            for (int64_t i = 0; i < v.inner; ++i)
                acc += xs[static_cast<size_t>((b * v.channels + c) * v.inner + i)];
        mean[static_cast<size_t>(c)] = acc / m;
    }
    for (int64_t c = 0; c < v.channels; ++c) {
        double mu = mean[static_cast<size_t>(c)];
        double acc = 0.0;
        for (int64_t b = 0; b < v.batch; ++b)
            for (int64_t i = 0; i < v.inner; ++i) {
                double d = xs[static_cast<size_t>((b * v.channels + c) * v.inner + i)] - mu;
                acc += d * d;
            }
        var[static_cast<size_t>(c)] = acc / m;
    }
    return st;
}

Tensor bn_normalize(const Tensor& x, const BnStats& stats, const Tensor& gamma, const Tensor& beta,
                    double eps) {
    ChannelView v = channel_view(x.shape());
    Tensor out = Tensor::zeros(x.shape(), Dtype::Real);
    auto o = out.reals();
    auto xs = x.reals();
    auto mean = stats.mean.reals();
    auto var = stats.var.reals();
    auto g = gamma.reals();
    auto be = beta.reals();
    for (int64_t c = 0; c < v.channels; ++c) {
        double invstd = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);
        double mu = mean[static_cast<size_t>(c)];
        double gc = g[static_cast<size_t>(c)], bc = be[static_cast<size_t>(c)];
        for (int64_t b = 0; b < v.batch; ++b)
            for (int64_t i = 0; i < v.inner; ++i) {
                size_t idx = static_cast<size_t>((b * v.channels + c) * v.inner + i);
                o[idx] = gc * (xs[idx] - mu) * invstd + bc;
            }
    }
    return out;
}

void bn_backward(const Tensor& x, const BnStats& stats, const Tensor& gamma, double eps,
                 const Tensor& grad_out, Tensor& grad_x, Tensor& grad_gamma, Tensor& grad_beta) {
    ChannelView v = channel_view(x.shape());
    grad_x = Tensor::zeros(x.shape(), Dtype::Real);
    grad_gamma = Tensor::zeros({v.channels}, Dtype::Real);
    grad_beta = Tensor::zeros({v.channels}, Dtype::Real);
    auto gx = grad_x.reals();
    auto gg = grad_gamma.reals();
    auto gb = grad_beta.reals();
    auto xs = x.reals();
    auto go = grad_out.reals();
    auto mean = stats.mean.reals();
    auto var = stats.var.reals();
    auto g = gamma.reals();
    double m = static_cast<double>(v.batch * v.inner);

    for (int64_t c = 0; c < v.channels; ++c) {
        double mu = mean[static_cast<size_t>(c)];
        double invstd = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);
        double gc = g[static_cast<size_t>(c)];
        double sum_go = 0.0, sum_go_xhat = 0.0;
        for (int64_t b = 0; b < v.batch; ++b)
            for (int64_t i = 0; i < v.inner; ++i) {
                size_t idx = static_cast<size_t>((b * v.channels + c) * v.inner + i);
                double xhat = (xs[idx] - mu) * invstd;
                sum_go += go[idx];
                sum_go_xhat += go[idx] * xhat;
            }
        gg[static_cast<size_t>(c)] = sum_go_xhat;
        gb[static_cast<size_t>(c)] = sum_go;
        for (int64_t b = 0; b < v.batch; ++b)
            for (int64_t i = 0; i < v.inner; ++i) {
                size_t idx = static_cast<size_t>((b * v.channels + c) * v.inner + i);
                double xhat = (xs[idx] - mu) * invstd;
                gx[idx] = gc * invstd / m * (m * go[idx] - sum_go - xhat * sum_go_xhat);
            }
    }
}

Tensor affine_channel(const Tensor& x, const Tensor& scale, const Tensor& shift) {
    ChannelView v = channel_view(x.shape());
    if (scale.numel() != v.channels || shift.numel() != v.channels)
        throw TensorError("affine_channel: scale/shift length does not match channels " +
                          std::to_string(v.channels));
    Tensor out = Tensor::zeros(x.shape(), Dtype::Real);
    auto o = out.reals();
    auto xs = x.reals();
    auto sc = scale.reals();
    auto sh = shift.reals();
    for (int64_t c = 0; c < v.channels; ++c)
        for (int64_t b = 0; b < v.batch; ++b)
            for (int64_t i = 0; i < v.inner; ++i) {
                size_t idx = static_cast<size_t>((b * v.channels + c) * v.inner + i);
                o[idx] = sc[static_cast<size_t>(c)] * xs[idx] + sh[static_cast<size_t>(c)];
            }
    return out;
}

Tensor pointwise(const Tensor& x, const std::function<double(double)>& fn) {
    Tensor out = Tensor::zeros(x.shape(), Dtype::Real);
    auto o = out.reals();
    for (int64_t i = 0; i < x.numel(); ++i) o[static_cast<size_t>(i)] = fn(x.value_at(i));
    return out;
}

double cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels, Tensor& softmax_out) {
    if (logits.rank() != 2)
        throw TensorError("cross_entropy: logits must be [batch, classes], got " +
                          shape_str(logits.shape()));
    int64_t bsz = logits.dim(0), k = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != bsz)
        throw TensorError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                          std::to_string(bsz));
    softmax_out = Tensor::zeros(logits.shape(), Dtype::Real);
    auto sm = softmax_out.reals();
    auto ls = logits.reals();
    double loss = 0.0;
    for (int64_t b = 0; b < bsz; ++b) {
        double mx = ls[static_cast<size_t>(b * k)];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, ls[static_cast<size_t>(b * k + j)]);
        double z = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            double e = std::exp(ls[static_cast<size_t>(b * k + j)] - mx);
            sm[static_cast<size_t>(b * k + j)] = e;
            z += e;
        }
        for (int64_t j = 0; j < k; ++j) sm[static_cast<size_t>(b * k + j)] /= z;
        int lab = labels[static_cast<size_t>(b)];
        if (lab < 0 || lab >= k)
            throw TensorError("cross_entropy: label " + std::to_string(lab) + " out of range");
        loss += -std::log(std::max(sm[static_cast<size_t>(b * k + lab)], 1e-300));
    }
    return loss / static_cast<double>(bsz);
}

}  // namespace ibra::kernels
