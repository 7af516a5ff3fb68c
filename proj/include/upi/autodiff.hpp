#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "upi/dual.hpp"
#include "upi/errors.hpp"
#include "upi/tensor.hpp"

namespace upi::ad {

using node_index = std::uint32_t;
inline constexpr node_index npos = 0xFFFFFFFFu;

// Wengert list over scalar type T (double, or Dual for tangent propagation
// through the adjoint sweep). Nodes hold contiguous (parent, partial) runs;
// local partials are fixed at record time.
template <typename T>
class Tape {
public:
    void reset() {
        nodes_.clear();
        args_.clear();
        partials_.clear();
    }

    std::size_t node_count() const { return nodes_.size(); }

    node_index leaf() {
        nodes_.push_back(Node{static_cast<std::uint32_t>(args_.size()), 0});
        return static_cast<node_index>(nodes_.size() - 1);
    }

    // Node assembly: begin(), any number of arg(), finish(). No other node may
    // be created between begin() and finish().
    void begin() { pending_begin_ = args_.size(); }

    void arg(node_index parent, T partial) {
        args_.push_back(parent);
        partials_.push_back(partial);
    }

    // npos means no argument was active; the value is a constant and no node
    // was recorded.
    node_index finish() {
        const std::size_t n = args_.size() - pending_begin_;
        if (n == 0) return npos;
        nodes_.push_back(Node{static_cast<std::uint32_t>(pending_begin_),
                              static_cast<std::uint32_t>(n)});
        return static_cast<node_index>(nodes_.size() - 1);
    }

    // Reverse sweep seeded with d(root)/d(root) = 1. adj is indexed by node;
    // leaves created first carry the gradient afterwards.
    void adjoints(node_index root, std::vector<T>& adj) const {
        adj.assign(nodes_.size(), T(0.0));
        adj[root] = T(1.0);
        for (std::size_t i = root + 1; i-- > 0;) {
            const T a = adj[i];
            if (is_zero(a)) continue;
            const Node& nd = nodes_[i];
            const std::uint32_t begin = nd.begin;
            for (std::uint32_t k = 0; k < nd.count; ++k) {
                adj[args_[begin + k]] += partials_[begin + k] * a;
            }
        }
    }

private:
    struct Node {
        std::uint32_t begin;
        std::uint32_t count;
    };
    std::vector<Node> nodes_;
    std::vector<node_index> args_;
    std::vector<T> partials_;
    std::size_t pending_begin_ = 0;
};

// Value bound to a tape node, or a passive constant when no node backs it.
// Arithmetic on passive values folds away without touching the tape.
template <typename T>
class Var {
public:
    Var() : value_(0.0) {}
    Var(T constant) : value_(constant) {}  // NOLINT: implicit lift of constants
    Var(Tape<T>* tape, node_index id, T value) : value_(value), tape_(tape), id_(id) {}

    bool active() const { return tape_ != nullptr && id_ != npos; }
    const T& value() const { return value_; }
    node_index id() const { return id_; }
    Tape<T>* tape() const { return tape_; }

private:
    T value_;
    Tape<T>* tape_ = nullptr;
    node_index id_ = npos;
};

template <typename T>
Var<T> make_unary(const Var<T>& x, T value, T partial) {
    if (!x.active()) return Var<T>(value);
    Tape<T>* tp = x.tape();
    tp->begin();
    tp->arg(x.id(), partial);
    return Var<T>(tp, tp->finish(), value);
}

template <typename T>
Var<T> make_binary(const Var<T>& a, const Var<T>& b, T value, T da, T db) {
    Tape<T>* tp = a.active() ? a.tape() : (b.active() ? b.tape() : nullptr);
    if (tp == nullptr) return Var<T>(value);
    tp->begin();
    if (a.active()) tp->arg(a.id(), da);
    if (b.active()) tp->arg(b.id(), db);
    return Var<T>(tp, tp->finish(), value);
}

template <typename T>
Var<T> operator-(const Var<T>& x) {
    return make_unary(x, T(-1.0) * x.value(), T(-1.0));
}

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
    return make_binary(a, b, a.value() + b.value(), T(1.0), T(1.0));
}
template <typename T>
Var<T> operator+(const Var<T>& a, double c) {
    return make_unary(a, a.value() + T(c), T(1.0));
}
template <typename T>
Var<T> operator+(double c, const Var<T>& b) {
    return b + c;
}

template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
    return make_binary(a, b, a.value() - b.value(), T(1.0), T(-1.0));
}
template <typename T>
Var<T> operator-(const Var<T>& a, double c) {
    return make_unary(a, a.value() - T(c), T(1.0));
}
template <typename T>
Var<T> operator-(double c, const Var<T>& b) {
    return make_unary(b, T(c) - b.value(), T(-1.0));
}

template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) {
    return make_binary(a, b, a.value() * b.value(), b.value(), a.value());
}
template <typename T>
Var<T> operator*(const Var<T>& a, double c) {
    return make_unary(a, scale_double(a.value(), c), T(c));
}
template <typename T>
Var<T> operator*(double c, const Var<T>& b) {
    return b * c;
}

template <typename T>
Var<T> operator/(const Var<T>& a, const Var<T>& b) {
    const T q = a.value() / b.value();
    const T inv = T(1.0) / b.value();
    return make_binary(a, b, q, inv, T(-1.0) * q * inv);
}
template <typename T>
Var<T> operator/(const Var<T>& a, double c) {
    return a * (1.0 / c);
}
template <typename T>
Var<T> operator/(double c, const Var<T>& b) {
    const T q = T(c) / b.value();
    return make_unary(b, q, T(-1.0) * q / b.value());
}

template <typename T>
Var<T> exp(const Var<T>& x) {
    using std::exp;
    const T e = exp(x.value());
    return make_unary(x, e, e);
}

template <typename T>
Var<T> log(const Var<T>& x) {
    using std::log;
    return make_unary(x, log(x.value()), T(1.0) / x.value());
}

template <typename T>
Var<T> log1p(const Var<T>& x) {
    using std::log1p;
    return make_unary(x, log1p(x.value()), T(1.0) / (T(1.0) + x.value()));
}

template <typename T>
Var<T> sqrt(const Var<T>& x) {
    using std::sqrt;
    const T r = sqrt(x.value());
    return make_unary(x, r, T(0.5) / r);
}

// |x| with subgradient sign(0) = 0: the value at a kink contributes no
// adjoint, matching the l1-normalization convention used by the saliency maps.
template <typename T>
Var<T> abs_val(const Var<T>& x) {
    const double s = sign_of(value_part(x.value()));
    if (s == 0.0) return Var<T>(T(0.0));
    return make_unary(x, scale_double(x.value(), s), T(s));
}

// relu(x): the positive branch aliases x (derivative one); otherwise a
// passive zero, so no gradient flows. relu'(0) = 0 by convention.
template <typename T>
Var<T> relu(const Var<T>& x) {
    return value_part(x.value()) > 0.0 ? x : Var<T>(T(0.0));
}

// softplus_beta(u) = log(1 + exp(beta*u)) / beta, evaluated in the stable
// branch; derivative is the logistic at beta*u.
template <typename T>
T softplus_value(const T& u, double beta) {
    using std::exp;
    using std::log1p;
    if (value_part(u) >= 0.0) {
        return u + scale_double(log1p(exp(scale_double(u, -beta))), 1.0 / beta);
    }
    return scale_double(log1p(exp(scale_double(u, beta))), 1.0 / beta);
}

template <typename T>
T logistic_value(const T& u, double beta) {
    using std::exp;
    if (value_part(u) >= 0.0) {
        return T(1.0) / (T(1.0) + exp(scale_double(u, -beta)));
    }
    const T e = exp(scale_double(u, beta));
    return e / (T(1.0) + e);
}

template <typename T>
Var<T> softplus(const Var<T>& x, double beta) {
    return make_unary(x, softplus_value(x.value(), beta), logistic_value(x.value(), beta));
}

// Accumulates an affine-plus-bilinear form as one fused node: constants,
// coeff*x terms, and x*y products. Keeps tapes short where fan-in is wide
// (dense layers, convolutions, reductions). Must not interleave with other
// node construction on the same tape.
template <typename T>
class NodeBuilder {
public:
    explicit NodeBuilder(Tape<T>& tape) : tape_(tape) { tape_.begin(); }

    void constant(T c) { value_ += c; }

    void term(const Var<T>& x, T coeff) {
        value_ += x.value() * coeff;
        if (x.active()) tape_.arg(x.id(), coeff);
    }

    void term_scaled(const Var<T>& x, double coeff) {
        value_ += scale_double(x.value(), coeff);
        if (x.active()) tape_.arg(x.id(), T(coeff));
    }

    void product(const Var<T>& a, const Var<T>& b) {
        value_ += a.value() * b.value();
        if (a.active()) tape_.arg(a.id(), b.value());
        if (b.active()) tape_.arg(b.id(), a.value());
    }

    Var<T> build() {
        const node_index id = tape_.finish();
        if (id == npos) return Var<T>(value_);
        return Var<T>(&tape_, id, value_);
    }

private:
    Tape<T>& tape_;
    T value_ = T(0.0);
};

template <typename T>
Var<T> sum(Tape<T>& tape, std::span<const Var<T>> xs) {
    NodeBuilder<T> nb(tape);
    for (const Var<T>& x : xs) nb.term_scaled(x, 1.0);
    return nb.build();
}

// log(sum_i exp(x_i)) stabilized around the running maximum value. The shift
// is a constant, so the expression stays exact regardless of the pivot.
template <typename T>
Var<T> log_sum_exp(Tape<T>& tape, std::span<const Var<T>> xs) {
    if (xs.empty()) throw ValueError("log_sum_exp: empty input");
    double pivot = value_part(xs[0].value());
    for (const Var<T>& x : xs) pivot = std::max(pivot, value_part(x.value()));
    std::vector<Var<T>> shifted;
    shifted.reserve(xs.size());
    for (const Var<T>& x : xs) shifted.push_back(exp(x - pivot));
    return log(sum(tape, std::span<const Var<T>>(shifted))) + pivot;
}

}  // namespace upi::ad

namespace upi {

// A scalar-valued computation over one tensor argument, recordable on either
// tape type. Construct with a template lambda:
//   DifferentiableScalar f(shape,
//       []<typename T>(ad::Tape<T>& tape, std::span<const ad::Var<T>> x) { ... });
class DifferentiableScalar {
public:
    template <typename F>
    DifferentiableScalar(Shape input_shape, F f)
        : shape_(std::move(input_shape)), real_(f), dual_(std::move(f)) {}

    const Shape& input_shape() const { return shape_; }

    ad::Var<double> record(ad::Tape<double>& tape,
                           std::span<const ad::Var<double>> x) const {
        return real_(tape, x);
    }
    ad::Var<Dual> record(ad::Tape<Dual>& tape, std::span<const ad::Var<Dual>> x) const {
        return dual_(tape, x);
    }

private:
    Shape shape_;
    std::function<ad::Var<double>(ad::Tape<double>&, std::span<const ad::Var<double>>)> real_;
    std::function<ad::Var<Dual>(ad::Tape<Dual>&, std::span<const ad::Var<Dual>>)> dual_;
};

struct GradientResult {
    double value = 0.0;
    Tensor gradient;
};

double evaluate(const DifferentiableScalar& f, const Tensor& x);

// Exact reverse-mode gradient of the recorded computation.
GradientResult evaluate_with_gradient(const DifferentiableScalar& f, const Tensor& x);

// H(f)(x) * v by forward-over-reverse: the reverse sweep runs in Dual
// arithmetic with the input tangent set to v.
Tensor hessian_vector_product(const DifferentiableScalar& f, const Tensor& x,
                              const Tensor& v);

// Central differences, (f(x + h e_i) - f(x - h e_i)) / 2h. Deliberately
// independent of the tapes so it can serve as an oracle against them.
Tensor finite_difference_gradient(const DifferentiableScalar& f, const Tensor& x,
                                  double step);

}  // namespace upi
