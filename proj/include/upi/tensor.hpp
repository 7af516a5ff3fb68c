#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "upi/errors.hpp"

namespace upi {

class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> extents) : extents_(extents) { validate(); }
    explicit Shape(std::vector<std::size_t> extents) : extents_(std::move(extents)) { validate(); }

    std::size_t rank() const { return extents_.size(); }
    std::size_t count() const;
    std::size_t operator[](std::size_t axis) const { return extents_[axis]; }
    const std::vector<std::size_t>& extents() const { return extents_; }
    bool operator==(const Shape& other) const { return extents_ == other.extents_; }
    bool operator!=(const Shape& other) const { return !(*this == other); }
    std::string str() const;

private:
    void validate() const;
    std::vector<std::size_t> extents_;
};

// Dense row-major tensor of doubles. Finiteness is enforced at module
// boundaries (check_finite), not per arithmetic op.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_.count(), 0.0) {}
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor vec(std::initializer_list<double> values);

void check_same_shape(const Tensor& a, const Tensor& b, const char* context);
void check_finite(const Tensor& t, const char* context);
void check_finite(double v, const char* context);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& t, double factor);
Tensor hadamard(const Tensor& a, const Tensor& b);
void axpy(double factor, const Tensor& x, Tensor& y);  // y += factor * x

double dot(const Tensor& a, const Tensor& b);
double l1_norm(const Tensor& t);
double l2_norm(const Tensor& t);
double linf_norm(const Tensor& t);

// sign(0) = 0 throughout; the l1 subgradient convention.
double sign_of(double v);
Tensor sign_of(const Tensor& t);

Tensor clamp01(const Tensor& t);

}  // namespace upi
