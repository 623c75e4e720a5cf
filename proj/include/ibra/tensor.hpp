#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ibra/error.hpp"

namespace ibra {

// Element type of a Tensor. Real values are stored in 64-bit floating point:
// the lowered-vs-training equivalence check compares two algebraically equal
// but differently ordered float computations, and the re-parameterized
// weights W/N plus the k/N activation grid must round-trip without flipping
// integer firing decisions. Int32 carries lowered activations (the scaled
// integer range never exceeds 8191); Bit stores only 0/1.
enum class Dtype : uint8_t { Real = 0, Int32 = 1, Bit = 2 };

const char* dtype_name(Dtype dt);

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, Dtype dt = Dtype::Real);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor from_reals(Shape shape, std::vector<double> data);
    static Tensor from_ints(Shape shape, std::vector<int32_t> data, Dtype dt = Dtype::Int32);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return numel_; }
    Dtype dtype() const { return dtype_; }
    bool is_real() const { return dtype_ == Dtype::Real; }

    std::span<const double> reals() const;
    std::span<double> reals();
    std::span<const int32_t> ints() const;
    std::span<int32_t> ints();

    // Element access independent of dtype (ints widened to double).
    double value_at(int64_t flat) const;

    Tensor reshaped(Shape new_shape) const;
    Tensor to_real() const;
    // Rounds are not implied: real values must already be integral within tol.
    Tensor to_int32(double tol = 1e-6) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool equals(const Tensor& other) const;  // dtype, shape and bitwise data

private:
    Shape shape_;
    int64_t numel_ = 0;
    Dtype dtype_ = Dtype::Real;
    std::vector<double> real_;
    std::vector<int32_t> int_;

    void check_real(const char* op) const;
    void check_int(const char* op) const;
};

// Elementwise value helpers (no autodiff; used for state math and tests).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& a, double s);
double max_abs(const Tensor& a);
bool all_finite(const Tensor& a);

}  // namespace ibra
