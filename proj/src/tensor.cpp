#include "upi/tensor.hpp"

#include <cmath>
#include <limits>

namespace upi {

std::size_t Shape::count() const {
    std::size_t n = extents_.empty() ? 0 : 1;
    for (std::size_t e : extents_) n *= e;
    return n;
}

std::string Shape::str() const {
    std::string out;
    for (std::size_t i = 0; i < extents_.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(extents_[i]);
    }
    return out.empty() ? "()" : out;
}

void Shape::validate() const {
    for (std::size_t e : extents_) {
        if (e == 0) throw ShapeError("zero extent in shape");
    }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.count() != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_.str());
    }
}

Tensor vec(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* context) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(context) + ": shape " + a.shape().str() +
                         " vs " + b.shape().str());
    }
}

void check_finite(const Tensor& t, const char* context) {
    for (double v : t.data()) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string(context) + ": non-finite tensor entry");
        }
    }
}

void check_finite(double v, const char* context) {
    if (!std::isfinite(v)) {
        throw NonFiniteError(std::string(context) + ": non-finite value");
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor scaled(const Tensor& t, double factor) {
    Tensor out(t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = t[i] * factor;
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "hadamard");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

void axpy(double factor, const Tensor& x, Tensor& y) {
    check_same_shape(x, y, "axpy");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += factor * x[i];
}

double dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l1_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += std::fabs(v);
    return s;
}

double l2_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
}

double linf_norm(const Tensor& t) {
    double m = 0.0;
    for (double v : t.data()) m = std::max(m, std::fabs(v));
    return m;
}

double sign_of(double v) {
    if (v > 0.0) return 1.0;
    if (v < 0.0) return -1.0;
    return 0.0;
}

Tensor sign_of(const Tensor& t) {
    Tensor out(t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sign_of(t[i]);
    return out;
}

Tensor clamp01(const Tensor& t) {
    Tensor out(t.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = t[i] < 0.0 ? 0.0 : (t[i] > 1.0 ? 1.0 : t[i]);
    }
    return out;
}

}  // namespace upi
