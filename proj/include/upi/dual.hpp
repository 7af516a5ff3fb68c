#pragma once

#include <cmath>

namespace upi {

// First-order dual number: value plus one tangent. Running a reverse-mode
// differentiation with Dual scalars propagates the tangent through both the
// recording and the adjoint sweep, which is exactly a Hessian-vector product.
struct Dual {
    double v = 0.0;
    double t = 0.0;

    Dual() = default;
    Dual(double value) : v(value) {}  // NOLINT: implicit by design, constants lift freely
    Dual(double value, double tangent) : v(value), t(tangent) {}

    Dual& operator+=(const Dual& o) {
        v += o.v;
        t += o.t;
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        t -= o.t;
        return *this;
    }
    Dual& operator*=(const Dual& o) {
        t = t * o.v + v * o.t;
        v *= o.v;
        return *this;
    }
};

inline Dual operator-(const Dual& a) { return {-a.v, -a.t}; }
inline Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.t + b.t}; }
inline Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.t - b.t}; }
inline Dual operator*(const Dual& a, const Dual& b) {
    return {a.v * b.v, a.t * b.v + a.v * b.t};
}
inline Dual operator/(const Dual& a, const Dual& b) {
    const double inv = 1.0 / b.v;
    const double q = a.v * inv;
    return {q, (a.t - q * b.t) * inv};
}

inline bool operator==(const Dual& a, const Dual& b) { return a.v == b.v && a.t == b.t; }
inline bool operator!=(const Dual& a, const Dual& b) { return !(a == b); }

inline Dual exp(const Dual& a) {
    const double e = std::exp(a.v);
    return {e, e * a.t};
}
inline Dual log(const Dual& a) { return {std::log(a.v), a.t / a.v}; }
inline Dual log1p(const Dual& a) { return {std::log1p(a.v), a.t / (1.0 + a.v)}; }
inline Dual sqrt(const Dual& a) {
    const double r = std::sqrt(a.v);
    return {r, 0.5 * a.t / r};
}

// Helpers that let generic code treat double and Dual uniformly.
inline double value_part(double x) { return x; }
inline double value_part(const Dual& x) { return x.v; }
inline bool is_zero(double x) { return x == 0.0; }
inline bool is_zero(const Dual& x) { return x.v == 0.0 && x.t == 0.0; }
inline double scale_double(double x, double c) { return x * c; }
inline Dual scale_double(const Dual& x, double c) { return {x.v * c, x.t * c}; }

}  // namespace upi
