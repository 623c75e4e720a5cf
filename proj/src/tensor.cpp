#include "ibra/tensor.hpp"

#include <cmath>
#include <cstdio>

namespace ibra {

const char* dtype_name(Dtype dt) {
    switch (dt) {
        case Dtype::Real: return "real";
        case Dtype::Int32: return "int32";
        case Dtype::Bit: return "bit";
    }
    return "?";
}

int64_t numel_of(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw TensorError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::zeros(Shape shape, Dtype dt) {
    Tensor t;
    t.numel_ = numel_of(shape);
    t.shape_ = std::move(shape);
    t.dtype_ = dt;
    if (dt == Dtype::Real)
        t.real_.assign(static_cast<size_t>(t.numel_), 0.0);
    else
        t.int_.assign(static_cast<size_t>(t.numel_), 0);
    return t;
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape), Dtype::Real);
    for (double& v : t.real_) v = value;
    return t;
}

Tensor Tensor::scalar(double value) { return from_reals({}, {value}); }

Tensor Tensor::from_reals(Shape shape, std::vector<double> data) {
    Tensor t;
    t.numel_ = numel_of(shape);
    if (t.numel_ != static_cast<int64_t>(data.size()))
        throw TensorError("shape " + shape_str(shape) + " expects " + std::to_string(t.numel_) +
                          " elements, got " + std::to_string(data.size()));
    t.shape_ = std::move(shape);
    t.dtype_ = Dtype::Real;
    t.real_ = std::move(data);
    return t;
}

Tensor Tensor::from_ints(Shape shape, std::vector<int32_t> data, Dtype dt) {
    if (dt == Dtype::Real) throw TensorError("from_ints requires an integer dtype");
    Tensor t;
    t.numel_ = numel_of(shape);
    if (t.numel_ != static_cast<int64_t>(data.size()))
        throw TensorError("shape " + shape_str(shape) + " expects " + std::to_string(t.numel_) +
                          " elements, got " + std::to_string(data.size()));
    if (dt == Dtype::Bit) {
        for (int32_t v : data)
            if (v != 0 && v != 1)
                throw TensorError("bit tensor may only hold 0/1, got " + std::to_string(v));
    }
    t.shape_ = std::move(shape);
    t.dtype_ = dt;
    t.int_ = std::move(data);
    return t;
}

void Tensor::check_real(const char* op) const {
    if (dtype_ != Dtype::Real)
        throw TensorError(std::string(op) + ": tensor is " + dtype_name(dtype_) + ", expected real");
}

void Tensor::check_int(const char* op) const {
    if (dtype_ == Dtype::Real)
        throw TensorError(std::string(op) + ": tensor is real, expected an integer dtype");
}

std::span<const double> Tensor::reals() const {
    check_real("reals");
    return real_;
}

std::span<double> Tensor::reals() {
    check_real("reals");
    return real_;
}

std::span<const int32_t> Tensor::ints() const {
    check_int("ints");
    return int_;
}

std::span<int32_t> Tensor::ints() {
    check_int("ints");
    return int_;
}

double Tensor::value_at(int64_t flat) const {
    if (dtype_ == Dtype::Real) return real_[static_cast<size_t>(flat)];
    return static_cast<double>(int_[static_cast<size_t>(flat)]);
}

Tensor Tensor::reshaped(Shape new_shape) const {
    if (numel_of(new_shape) != numel_)
        throw TensorError("reshape " + shape_str(shape_) + " -> " + shape_str(new_shape) +
                          " changes element count");
    Tensor t = *this;
    t.shape_ = std::move(new_shape);
    return t;
}

Tensor Tensor::to_real() const {
    if (dtype_ == Dtype::Real) return *this;
    Tensor t = zeros(shape_, Dtype::Real);
    for (size_t i = 0; i < int_.size(); ++i) t.real_[i] = static_cast<double>(int_[i]);
    return t;
}

Tensor Tensor::to_int32(double tol) const {
    if (dtype_ != Dtype::Real) {
        Tensor t = *this;
        t.dtype_ = Dtype::Int32;
        return t;
    }
    Tensor t = zeros(shape_, Dtype::Int32);
    auto out = t.ints();
    for (size_t i = 0; i < real_.size(); ++i) {
        double r = std::round(real_[i]);
        if (std::abs(real_[i] - r) > tol)
            throw TensorError("to_int32: value " + std::to_string(real_[i]) +
                              " is not integral within " + std::to_string(tol));
        out[i] = static_cast<int32_t>(r);
    }
    return t;
}

bool Tensor::equals(const Tensor& other) const {
    if (dtype_ != other.dtype_ || shape_ != other.shape_) return false;
    if (dtype_ == Dtype::Real) {
        for (size_t i = 0; i < real_.size(); ++i)
            if (real_[i] != other.real_[i]) return false;
        return true;
    }
    return int_ == other.int_;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw TensorError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape(), Dtype::Real);
    auto o = out.reals();
    for (int64_t i = 0; i < a.numel(); ++i) o[static_cast<size_t>(i)] = a.value_at(i) + b.value_at(i);
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw TensorError("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape(), Dtype::Real);
    auto o = out.reals();
    for (int64_t i = 0; i < a.numel(); ++i) o[static_cast<size_t>(i)] = a.value_at(i) - b.value_at(i);
    return out;
}

Tensor mul_scalar(const Tensor& a, double s) {
    Tensor out = Tensor::zeros(a.shape(), Dtype::Real);
    auto o = out.reals();
    for (int64_t i = 0; i < a.numel(); ++i) o[static_cast<size_t>(i)] = a.value_at(i) * s;
    return out;
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.value_at(i)));
    return m;
}

bool all_finite(const Tensor& a) {
    if (a.dtype() != Dtype::Real) return true;
    for (double v : a.reals())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace ibra
