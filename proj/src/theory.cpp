#include "upi/theory.hpp"

#include <algorithm>
#include <cmath>

#include "upi/rng.hpp"
#include "upi/serialize.hpp"

namespace upi {

ScalarField field_from_scalar(const DifferentiableScalar& f, Shape shape) {
    ScalarField field;
    field.shape = std::move(shape);
    field.value = [f](const Tensor& v) { return evaluate(f, v); };
    field.gradient = [f](const Tensor& v) { return evaluate_with_gradient(f, v).gradient; };
    return field;
}

ScalarField field_from_objective(const PerturbationObjective& objective, std::size_t i) {
    if (i >= objective.sample_count()) {
        throw ValueError("scalar field: sample index out of range");
    }
    ScalarField field;
    field.shape = objective.shape();
    field.value = [&objective, i](const Tensor& v) { return objective.value(i, v); };
    field.gradient = [&objective, i](const Tensor& v) {
        return objective.value_and_gradient(i, v).gradient;
    };
    return field;
}

SteinCheckReport stein_lemma_check(const DifferentiableScalar& f, const Tensor& x,
                                   double sigma, std::size_t samples, std::uint64_t seed) {
    if (!(sigma > 0.0)) throw ValueError("stein check: sigma must be > 0");
    if (samples == 0) throw ValueError("stein check: needs at least one sample");
    Rng rng(Rng::derive(seed, 0));
    SteinCheckReport report;
    report.lhs = Tensor(x.shape());
    report.rhs = Tensor(x.shape());
    report.samples = samples;
    const double inv = 1.0 / static_cast<double>(samples);
    const double inv_var = 1.0 / (sigma * sigma);
    for (std::size_t s = 0; s < samples; ++s) {
        const Tensor z = rng.normal_tensor(x.shape(), sigma);
        const GradientResult gr = evaluate_with_gradient(f, add(x, z));
        axpy(inv, gr.gradient, report.lhs);
        axpy(inv * inv_var * gr.value, z, report.rhs);
    }
    report.gap =
        l2_norm(sub(report.lhs, report.rhs)) / std::max(l2_norm(report.lhs), 1e-12);
    return report;
}

namespace {

Tensor uniform_in_ball(Rng& rng, const Shape& shape, const Tensor& center, double radius) {
    Tensor dir = rng.normal_tensor(shape, 1.0);
    const double n = l2_norm(dir);
    if (n < 1e-12) {
        dir = Tensor(shape);
        dir[0] = 1.0;
    } else {
        dir = scaled(dir, 1.0 / n);
    }
    const double d = static_cast<double>(shape.count());
    const double r = radius * std::pow(rng.uniform(), 1.0 / d);
    Tensor out = center;
    axpy(r, dir, out);
    return out;
}

}  // namespace

double lipschitz_estimate_core(const ScalarField& field, const Tensor& center,
                               double radius, std::size_t probes, std::uint64_t seed) {
    if (probes < 2) throw ValueError("lipschitz estimate: needs at least two probes");
    if (!(radius > 0.0)) throw ValueError("lipschitz estimate: radius must be > 0");
    if (center.shape() != field.shape) {
        throw ShapeError("lipschitz estimate: center shape mismatch");
    }
    Rng rng(Rng::derive(seed, 0));
    std::vector<Tensor> points;
    std::vector<double> values;
    points.reserve(probes);
    values.reserve(probes);
    for (std::size_t p = 0; p < probes; ++p) {
        points.push_back(uniform_in_ball(rng, field.shape, center, radius));
        values.push_back(field.value(points.back()));
    }
    double best = 0.0;
    for (std::size_t a = 0; a < probes; ++a) {
        for (std::size_t b = a + 1; b < probes; ++b) {
            const double dist = l2_norm(sub(points[a], points[b]));
            if (dist < 1e-12) continue;
            best = std::max(best, std::abs(values[a] - values[b]) / dist);
        }
    }
    return best;
}

double lipschitz_estimate(const Network& net, const Interpreter& interpreter,
                          const Tensor& x, double radius, std::size_t probes,
                          std::uint64_t seed) {
    const InterpretationObjective objective(net, interpreter, {x});
    ScalarField field = field_from_objective(objective, 0);
    Tensor zero(field.shape);
    return lipschitz_estimate_core(field, zero, radius, probes, seed);
}

namespace {

double stddev(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double ss = 0.0;
    for (const double v : xs) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

SandwichCheckReport prop1_sandwich_check(const ScalarField& field, const Tensor& x,
                                         const Tensor& delta,
                                         const SandwichCheckConfig& cfg) {
    if (x.shape() != field.shape || delta.shape() != field.shape) {
        throw ShapeError("sandwich check: shape mismatch");
    }
    if (!(cfg.sigma > 0.0)) throw ValueError("sandwich check: sigma must be > 0");
    if (!(cfg.epsilon > 0.0)) throw ValueError("sandwich check: epsilon must be > 0");
    if (cfg.mc_samples < 2) throw ValueError("sandwich check: needs at least two samples");
    if (cfg.c_grid < 3) throw ValueError("sandwich check: grid needs at least three points");
    if (l2_norm(delta) > cfg.epsilon + 1e-9) {
        throw ValueError("sandwich check: ||delta||_2 exceeds epsilon");
    }

    SandwichCheckReport report;
    report.lambda = cfg.lambda;
    report.samples = cfg.mc_samples;

    if (cfg.tau) {
        report.tau = *cfg.tau;
    } else {
        report.lipschitz = lipschitz_estimate_core(field, x, cfg.epsilon,
                                                   cfg.lipschitz_probes,
                                                   Rng::derive(cfg.seed, 0));
        const double d = static_cast<double>(field.shape.count());
        report.tau = report.lipschitz * std::sqrt(d) * cfg.epsilon * cfg.epsilon / cfg.sigma;
    }
    if (!(cfg.lambda > report.tau)) {
        report.hypothesis_violated = true;
        report.holds = false;
        return report;
    }

    const std::size_t S = cfg.mc_samples;
    Rng rng(Rng::derive(cfg.seed, 1));
    std::vector<Tensor> shifted;  // x + z_s, shared by every estimator
    shifted.reserve(S);
    std::vector<double> base(S);
    std::vector<double> t(S);
    for (std::size_t s = 0; s < S; ++s) {
        Tensor p = x;
        axpy(1.0, rng.normal_tensor(field.shape, cfg.sigma), p);
        base[s] = field.value(p);
        t[s] = dot(delta, field.gradient(p));
        shifted.push_back(std::move(p));
    }
    double b = 0.0;
    for (const double v : t) b += v;
    b /= static_cast<double>(S);
    const double se_b = stddev(t, b) / std::sqrt(static_cast<double>(S));
    report.mean_gradient_dot = b;

    const double c_max = 2.0 * std::abs(b) / (cfg.lambda - report.tau) + 1.0;
    const std::size_t G = cfg.c_grid;
    double best = -1e300;
    double best_c = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
        const double c = -c_max + 2.0 * c_max * static_cast<double>(g) /
                                      static_cast<double>(G - 1);
        double mean_diff = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            Tensor p = shifted[s];
            axpy(c, delta, p);
            mean_diff += field.value(p) - base[s];
        }
        mean_diff /= static_cast<double>(S);
        const double objective = mean_diff - cfg.lambda * c * c / 2.0;
        if (objective > best) {
            best = objective;
            best_c = c;
        }
    }
    report.middle = best;
    report.c_star = best_c;

    std::vector<double> gap(S);
    for (std::size_t s = 0; s < S; ++s) {
        Tensor p = shifted[s];
        axpy(best_c, delta, p);
        gap[s] = field.value(p) - base[s];
    }
    double gap_mean = 0.0;
    for (const double v : gap) gap_mean += v;
    gap_mean /= static_cast<double>(S);
    const double se_mid = stddev(gap, gap_mean) / std::sqrt(static_cast<double>(S));

    report.lower = b * b / (cfg.lambda + report.tau);
    report.upper = b * b / (cfg.lambda - report.tau);
    const double se_lower = 2.0 * std::abs(b) * se_b / (cfg.lambda + report.tau);
    const double se_upper = 2.0 * std::abs(b) * se_b / (cfg.lambda - report.tau);
    report.margin_lower = 3.0 * (se_lower + se_mid);
    report.margin_upper = 3.0 * (se_mid + se_upper);
    report.holds = report.lower <= report.middle + report.margin_lower &&
                   report.middle <= report.upper + report.margin_upper;
    report.per_sample_gradient_dot = std::move(t);
    report.per_sample_gap = std::move(gap);
    return report;
}

std::string to_text(const SteinCheckReport& report) {
    std::string out = "check: stein_lemma\n";
    out += "samples: " + std::to_string(report.samples) + "\n";
    out += "lhs_l2: " + format_g17(l2_norm(report.lhs)) + "\n";
    out += "rhs_l2: " + format_g17(l2_norm(report.rhs)) + "\n";
    out += "relative_gap: " + format_g17(report.gap) + "\n";
    return out;
}

std::string to_text(const SandwichCheckReport& report) {
    std::string out = "check: sandwich\n";
    out += "lambda: " + format_g17(report.lambda) + "\n";
    out += "tau: " + format_g17(report.tau) + "\n";
    out += "lipschitz: " + format_g17(report.lipschitz) + "\n";
    out += "hypothesis_violated: " + std::string(report.hypothesis_violated ? "1" : "0") +
           "\n";
    out += "samples: " + std::to_string(report.samples) + "\n";
    out += "lower: " + format_g17(report.lower) + "\n";
    out += "middle: " + format_g17(report.middle) + "\n";
    out += "upper: " + format_g17(report.upper) + "\n";
    out += "c_star: " + format_g17(report.c_star) + "\n";
    out += "mean_gradient_dot: " + format_g17(report.mean_gradient_dot) + "\n";
    out += "margin_lower: " + format_g17(report.margin_lower) + "\n";
    out += "margin_upper: " + format_g17(report.margin_upper) + "\n";
    out += "holds: " + std::string(report.holds ? "1" : "0") + "\n";
    return out;
}

std::string to_csv(const SandwichCheckReport& report) {
    std::string out = "sample,gradient_dot,gap_at_c_star\n";
    for (std::size_t s = 0; s < report.per_sample_gradient_dot.size(); ++s) {
        out += std::to_string(s) + "," + format_g17(report.per_sample_gradient_dot[s]) +
               "," + format_g17(report.per_sample_gap[s]) + "\n";
    }
    return out;
}

}  // namespace upi
