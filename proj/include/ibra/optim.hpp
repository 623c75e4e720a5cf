#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ibra/tensor.hpp"

namespace ibra {

// A parameter registered with an optimizer: the tensor lives in its layer,
// the name carries the layer id for error attribution.
struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
};

class Optimizer {
public:
    virtual ~Optimizer() = default;
    // grads[i] pairs with params[i]; an empty tensor means no update.
    virtual void step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads) = 0;
    virtual const char* name() const = 0;
};

class Sgd : public Optimizer {
public:
    explicit Sgd(double lr, double momentum = 0.0) : lr_(lr), momentum_(momentum) {}
    void step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads) override;
    const char* name() const override { return "sgd"; }

private:
    double lr_, momentum_;
    std::vector<Tensor> velocity_;
};

class Adam : public Optimizer {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads) override;
    const char* name() const override { return "adam"; }

private:
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(const std::string& kind, double lr);

}  // namespace ibra
