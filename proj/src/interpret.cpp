#include "upi/interpret.hpp"

#include <cmath>

namespace upi {

Tensor l1_normalized(const Tensor& t, const char* context) {
    const double n = l1_norm(t);
    if (!(n >= 1e-12)) {
        throw DegenerateInterpretationError(std::string(context) +
                                            ": l1 norm below 1e-12, no direction to keep");
    }
    return scaled(t, 1.0 / n);
}

InterpretationMap simple_gradient_map(const Network& net, const Tensor& x,
                                      std::optional<std::size_t> label) {
    const std::size_t c = label ? *label : net.predict(x);
    const DifferentiableScalar score = score_function(net, c);
    const GradientResult g = evaluate_with_gradient(score, x);
    return InterpretationMap{l1_normalized(g.gradient, "simple gradient map"), c};
}

Tensor integrated_gradients_raw(const Network& net, const Tensor& x, const IGConfig& cfg,
                                std::optional<std::size_t> label) {
    if (cfg.steps == 0) throw ValueError("integrated gradients: zero steps");
    Tensor reference = cfg.reference.empty() ? Tensor(x.shape()) : cfg.reference;
    if (reference.shape() != x.shape()) {
        throw ShapeError("integrated gradients: reference shape " +
                         reference.shape().str() + " does not match input " +
                         x.shape().str());
    }
    const std::size_t c = label ? *label : net.predict(x);
    const DifferentiableScalar score = score_function(net, c);
    const Tensor delta = sub(x, reference);
    const double m = static_cast<double>(cfg.steps);

    Tensor grad_sum(x.shape());
    Tensor point(x.shape());
    for (std::size_t k = 1; k <= cfg.steps; ++k) {
        point = reference;
        axpy(static_cast<double>(k) / m, delta, point);
        axpy(1.0, evaluate_with_gradient(score, point).gradient, grad_sum);
    }
    Tensor raw = hadamard(delta, grad_sum);
    for (double& v : raw.data()) v /= m;
    return raw;
}

InterpretationMap integrated_gradients_map(const Network& net, const Tensor& x,
                                           const IGConfig& cfg,
                                           std::optional<std::size_t> label) {
    const std::size_t c = label ? *label : net.predict(x);
    return InterpretationMap{
        l1_normalized(integrated_gradients_raw(net, x, cfg, c), "integrated gradients map"),
        c};
}

double completeness_gap(const Network& net, const Tensor& x, const IGConfig& cfg,
                        std::optional<std::size_t> label) {
    const std::size_t c = label ? *label : net.predict(x);
    const Tensor raw = integrated_gradients_raw(net, x, cfg, c);
    double sum = 0.0;
    for (double v : raw.data()) sum += v;
    const Tensor reference = cfg.reference.empty() ? Tensor(x.shape()) : cfg.reference;
    const double gap = net.scores(x)[c] - net.scores(reference)[c];
    return std::abs(sum - gap) / std::max(std::abs(gap), 1e-12);
}

InterpretationMethod interpretation_method_from_string(const std::string& name) {
    if (name == "simple" || name == "simple_gradient") {
        return InterpretationMethod::simple_gradient;
    }
    if (name == "integrated" || name == "integrated_gradients") {
        return InterpretationMethod::integrated_gradients;
    }
    throw ValueError("unknown interpretation method '" + name + "'");
}

std::string to_string(InterpretationMethod method) {
    return method == InterpretationMethod::simple_gradient ? "simple" : "integrated";
}

InterpretationMap Interpreter::map(const Network& net, const Tensor& x,
                                   std::optional<std::size_t> label) const {
    return method == InterpretationMethod::simple_gradient
               ? simple_gradient_map(net, x, label)
               : integrated_gradients_map(net, x, ig, label);
}

}  // namespace upi
