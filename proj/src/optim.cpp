#include "ibra/optim.hpp"

#include <cmath>

#include "ibra/error.hpp"

namespace ibra {

namespace {

void check_grad(const ParamRef& p, const Tensor& g) {
    if (g.numel() != p.value->numel())
        throw TensorError("optimizer: gradient shape " + shape_str(g.shape()) +
                          " does not match parameter '" + p.name + "' " +
                          shape_str(p.value->shape()));
    for (double v : g.reals())
        if (!std::isfinite(v))
            throw NumericError("non-finite gradient in parameter '" + p.name + "'");
}

}  // namespace

void Sgd::step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads) {
    if (velocity_.empty() && momentum_ != 0.0) velocity_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor& g = grads[i];
        if (g.numel() == 0) continue;
        check_grad(params[i], g);
        auto w = params[i].value->reals();
        auto gs = g.reals();
        if (momentum_ == 0.0) {
            for (size_t j = 0; j < w.size(); ++j) w[j] -= lr_ * gs[j];
        } else {
            if (velocity_[i].numel() == 0)
                velocity_[i] = Tensor::zeros(params[i].value->shape(), Dtype::Real);
            auto v = velocity_[i].reals();
            for (size_t j = 0; j < w.size(); ++j) {
                v[j] = momentum_ * v[j] + gs[j];
                w[j] -= lr_ * v[j];
            }
        }
    }
}

void Adam::step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor& g = grads[i];
        if (g.numel() == 0) continue;
        check_grad(params[i], g);
        if (m_[i].numel() == 0) {
            m_[i] = Tensor::zeros(params[i].value->shape(), Dtype::Real);
            v_[i] = Tensor::zeros(params[i].value->shape(), Dtype::Real);
        }
        auto w = params[i].value->reals();
        auto gs = g.reals();
        auto m = m_[i].reals();
        auto v = v_[i].reals();
        for (size_t j = 0; j < w.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gs[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gs[j] * gs[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, double lr) {
    if (kind == "sgd") return std::make_unique<Sgd>(lr);
    if (kind == "adam") return std::make_unique<Adam>(lr);
    throw UsageError("unknown optimizer '" + kind + "' (expected sgd or adam)");
}

}  // namespace ibra
