#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "upi/attack.hpp"
#include "upi/autodiff.hpp"
#include "upi/interpret.hpp"
#include "upi/network.hpp"

namespace upi {

// A scalar function of a tensor with an exact gradient; the common coin of
// the numerical checks, so they run identically on closed-form toys and on
// network objectives.
struct ScalarField {
    Shape shape;
    std::function<double(const Tensor&)> value;
    std::function<Tensor(const Tensor&)> gradient;
};

ScalarField field_from_scalar(const DifferentiableScalar& f, Shape shape);

// D_i of the objective as a field over the perturbation argument.
ScalarField field_from_objective(const PerturbationObjective& objective, std::size_t i);

struct SteinCheckReport {
    Tensor lhs;  // Monte-Carlo E[grad f(x+Z)]
    Tensor rhs;  // Monte-Carlo E[f(x+Z) Z] / sigma^2
    double gap = 0.0;
    std::size_t samples = 0;
};

// Gaussian integration-by-parts identity, both sides estimated on the same
// draws. The gap is || lhs - rhs ||_2 / max(||lhs||_2, 1e-12).
SteinCheckReport stein_lemma_check(const DifferentiableScalar& f, const Tensor& x,
                                   double sigma, std::size_t samples, std::uint64_t seed);

// Empirical Lipschitz constant of the field on a ball: max over all probe
// pairs of |f(a) - f(b)| / ||a - b||_2, probes drawn uniformly in the ball
// around center. A lower bound on the true constant; probes are drawn
// sequentially from one stream, so for a fixed seed the estimate is
// non-decreasing in the probe count.
double lipschitz_estimate_core(const ScalarField& field, const Tensor& center,
                               double radius, std::size_t probes, std::uint64_t seed);

// The map-distance objective D(delta) = || I(x) - I(x + delta) ||_2^2 around
// a fixed input.
double lipschitz_estimate(const Network& net, const Interpreter& interpreter,
                          const Tensor& x, double radius, std::size_t probes,
                          std::uint64_t seed);

struct SandwichCheckConfig {
    double lambda = 1.0;
    double sigma = 0.01;
    double epsilon = 0.1;
    std::size_t mc_samples = 2000;
    std::size_t c_grid = 401;  // points on the symmetric grid, >= 3
    std::size_t lipschitz_probes = 64;
    std::uint64_t seed = 0;
    // tau = L sqrt(d) epsilon^2 / sigma with empirical L unless given here.
    std::optional<double> tau;
};

struct SandwichCheckReport {
    double lower = 0.0;
    double middle = 0.0;
    double upper = 0.0;
    double lambda = 0.0;
    double tau = 0.0;
    bool holds = false;
    // lambda <= tau: the bounds are vacuous, so they are not evaluated.
    bool hypothesis_violated = false;
    double c_star = 0.0;
    double margin_lower = 0.0;  // three standard errors, lower vs middle
    double margin_upper = 0.0;  // three standard errors, middle vs upper
    double lipschitz = 0.0;
    double mean_gradient_dot = 0.0;  // delta . E[grad f(x+Z)]
    std::size_t samples = 0;
    // Per-sample Monte-Carlo terms, aligned by draw: delta . grad f(x+z_s)
    // and f(x+z_s+c* delta) - f(x+z_s).
    std::vector<double> per_sample_gradient_dot;
    std::vector<double> per_sample_gap;
};

// Checks, by Monte-Carlo with shared draws,
//   b^2/(lambda+tau) <= max_c { E[f(x+Z+c delta)] - lambda c^2/2 } - E[f(x+Z)]
//                    <= b^2/(lambda-tau),   b = delta . E[grad f(x+Z)],
// with the inner maximum scanned on a symmetric grid of cfg.c_grid points
// over [-c_max, c_max], c_max = 2|b|/(lambda-tau) + 1. holds allows three
// standard errors of slack on each side. Requires ||delta||_2 <= epsilon.
SandwichCheckReport prop1_sandwich_check(const ScalarField& field, const Tensor& x,
                                         const Tensor& delta,
                                         const SandwichCheckConfig& cfg);

// Structured-text and CSV renderings ("key: value" lines; per-draw rows).
std::string to_text(const SteinCheckReport& report);
std::string to_text(const SandwichCheckReport& report);
std::string to_csv(const SandwichCheckReport& report);

}  // namespace upi
