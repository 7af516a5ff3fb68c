#include "upi/autodiff.hpp"

#include <cmath>

namespace upi {

namespace {

template <typename T>
struct Workspace {
    ad::Tape<T> tape;
    std::vector<ad::Var<T>> inputs;
    std::vector<T> adj;
    bool in_use = false;
};

// Thread-local scratch reused across calls; falls back to a stack-local
// workspace if a recording ever re-enters (defensive, not expected).
template <typename T, typename Fn>
auto with_workspace(Fn&& fn) {
    thread_local Workspace<T> shared;
    if (shared.in_use) {
        Workspace<T> local;
        return fn(local);
    }
    shared.in_use = true;
    struct Release {
        Workspace<T>* w;
        ~Release() { w->in_use = false; }
    } release{&shared};
    return fn(shared);
}

void require_input_shape(const DifferentiableScalar& f, const Tensor& x,
                         const char* context) {
    if (x.shape() != f.input_shape()) {
        throw ShapeError(std::string(context) + ": input shape " + x.shape().str() +
                         " does not match declared " + f.input_shape().str());
    }
}

}  // namespace

double evaluate(const DifferentiableScalar& f, const Tensor& x) {
    require_input_shape(f, x, "evaluate");
    check_finite(x, "evaluate input");
    return with_workspace<double>([&](Workspace<double>& ws) {
        ws.tape.reset();
        ws.inputs.clear();
        ws.inputs.reserve(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            ws.inputs.emplace_back(&ws.tape, ws.tape.leaf(), x[i]);
        }
        const ad::Var<double> root =
            f.record(ws.tape, std::span<const ad::Var<double>>(ws.inputs));
        check_finite(root.value(), "evaluate result");
        return root.value();
    });
}

GradientResult evaluate_with_gradient(const DifferentiableScalar& f, const Tensor& x) {
    require_input_shape(f, x, "evaluate_with_gradient");
    check_finite(x, "evaluate_with_gradient input");
    return with_workspace<double>([&](Workspace<double>& ws) {
        ws.tape.reset();
        ws.inputs.clear();
        ws.inputs.reserve(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            ws.inputs.emplace_back(&ws.tape, ws.tape.leaf(), x[i]);
        }
        const ad::Var<double> root =
            f.record(ws.tape, std::span<const ad::Var<double>>(ws.inputs));
        check_finite(root.value(), "evaluate_with_gradient value");

        GradientResult out{root.value(), Tensor(x.shape())};
        if (root.active()) {
            ws.tape.adjoints(root.id(), ws.adj);
            for (std::size_t i = 0; i < x.size(); ++i) out.gradient[i] = ws.adj[i];
        }
        check_finite(out.gradient, "evaluate_with_gradient gradient");
        return out;
    });
}

Tensor hessian_vector_product(const DifferentiableScalar& f, const Tensor& x,
                              const Tensor& v) {
    require_input_shape(f, x, "hessian_vector_product");
    check_same_shape(x, v, "hessian_vector_product direction");
    check_finite(x, "hessian_vector_product input");
    check_finite(v, "hessian_vector_product direction");
    return with_workspace<Dual>([&](Workspace<Dual>& ws) {
        ws.tape.reset();
        ws.inputs.clear();
        ws.inputs.reserve(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            ws.inputs.emplace_back(&ws.tape, ws.tape.leaf(), Dual{x[i], v[i]});
        }
        const ad::Var<Dual> root =
            f.record(ws.tape, std::span<const ad::Var<Dual>>(ws.inputs));
        check_finite(root.value().v, "hessian_vector_product value");

        Tensor out(x.shape());
        if (root.active()) {
            ws.tape.adjoints(root.id(), ws.adj);
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = ws.adj[i].t;
        }
        check_finite(out, "hessian_vector_product result");
        return out;
    });
}

Tensor finite_difference_gradient(const DifferentiableScalar& f, const Tensor& x,
                                  double step) {
    require_input_shape(f, x, "finite_difference_gradient");
    if (!(step > 0.0)) throw ValueError("finite_difference_gradient: step must be > 0");
    Tensor probe = x;
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double base = x[i];
        probe[i] = base + step;
        const double hi = evaluate(f, probe);
        probe[i] = base - step;
        const double lo = evaluate(f, probe);
        probe[i] = base;
        out[i] = (hi - lo) / (2.0 * step);
    }
    return out;
}

}  // namespace upi
