#include "upi/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "upi/rng.hpp"

namespace upi {

namespace {

// Seed stream ids; fgm and pgd share kStreamNoise so a single pgd step sees
// the same z as fgm under the same seed.
constexpr std::uint64_t kStreamInit = 0;
constexpr std::uint64_t kStreamBatch = 1;
constexpr std::uint64_t kStreamNoise = 2;
constexpr std::uint64_t kStreamTraceNoise = 3;
constexpr std::uint64_t kStreamPgdRows = 16;

}  // namespace

NormKind norm_kind_from_string(const std::string& name) {
    if (name == "l2") return NormKind::l2;
    if (name == "linf") return NormKind::linf;
    throw ValueError("unknown norm kind '" + name + "'");
}

std::string to_string(NormKind norm) { return norm == NormKind::l2 ? "l2" : "linf"; }

void PerturbationBudget::validate() const {
    if (!(epsilon > 0.0)) throw ValueError("budget: epsilon must be > 0");
}

double norm_of(const Tensor& t, NormKind norm) {
    return norm == NormKind::l2 ? l2_norm(t) : linf_norm(t);
}

Tensor project_to_ball(const Tensor& v, const PerturbationBudget& budget) {
    budget.validate();
    check_finite(v, "project_to_ball");
    if (budget.norm == NormKind::l2) {
        const double n = l2_norm(v);
        if (n <= budget.epsilon) return v;
        return scaled(v, budget.epsilon / n);
    }
    Tensor out(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::min(std::max(v[i], -budget.epsilon), budget.epsilon);
    }
    return out;
}

Perturbation::Perturbation(Tensor delta, PerturbationBudget budget)
    : delta_(std::move(delta)), budget_(budget) {
    budget_.validate();
    check_finite(delta_, "perturbation");
    const double n = norm_of(delta_, budget_.norm);
    if (n > budget_.epsilon + 1e-9) {
        throw ValueError("perturbation: " + to_string(budget_.norm) + " norm " +
                         std::to_string(n) + " exceeds budget " +
                         std::to_string(budget_.epsilon));
    }
}

InterpretationObjective::InterpretationObjective(const Network& net, Interpreter interpreter,
                                                 std::vector<Tensor> inputs,
                                                 bool freeze_labels)
    : net_(&net), interpreter_(std::move(interpreter)), freeze_labels_(freeze_labels) {
    if (inputs.empty()) throw ValueError("interpretation objective: no inputs");
    inputs_.reserve(inputs.size());
    clean_maps_.reserve(inputs.size());
    clean_labels_.reserve(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].shape() != net.input_shape()) {
            throw ShapeError("interpretation objective: input " + std::to_string(i) +
                             " has shape " + inputs[i].shape().str());
        }
        try {
            InterpretationMap m = interpreter_.map(net, inputs[i]);
            clean_maps_.push_back(std::move(m.values));
            clean_labels_.push_back(m.label);
            inputs_.push_back(std::move(inputs[i]));
        } catch (const DegenerateInterpretationError&) {
            skipped_.push_back(i);
        }
    }
    if (inputs_.empty()) {
        throw DegenerateInterpretationError(
            "interpretation objective: every clean map is degenerate");
    }
}

double InterpretationObjective::value(std::size_t i, const Tensor& v) const {
    const Tensor u = add(inputs_[i], v);
    const std::optional<std::size_t> label =
        freeze_labels_ ? std::optional<std::size_t>(clean_labels_[i]) : std::nullopt;
    const InterpretationMap mu = interpreter_.map(*net_, u, label);
    const Tensor r = sub(clean_maps_[i], mu.values);
    return dot(r, r);
}

GradientResult InterpretationObjective::value_and_gradient(std::size_t i,
                                                           const Tensor& v) const {
    const Tensor u = add(inputs_[i], v);
    const std::size_t label = freeze_labels_ ? clean_labels_[i] : net_->predict(u);
    const InterpretationDistance d =
        interpretation_distance_with_gradient(*net_, interpreter_, clean_maps_[i], u, label);
    return GradientResult{d.value, d.gradient};
}

ClassificationLossObjective::ClassificationLossObjective(const Network& net,
                                                         std::vector<Tensor> inputs,
                                                         std::vector<std::size_t> labels)
    : net_(&net), inputs_(std::move(inputs)), labels_(std::move(labels)) {
    if (inputs_.empty()) throw ValueError("classification objective: no inputs");
    if (inputs_.size() != labels_.size()) {
        throw ValueError("classification objective: input and label counts differ");
    }
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
        if (inputs_[i].shape() != net.input_shape()) {
            throw ShapeError("classification objective: input shape mismatch");
        }
        if (labels_[i] >= net.class_count()) {
            throw ValueError("classification objective: label out of range");
        }
    }
}

double ClassificationLossObjective::value(std::size_t i, const Tensor& v) const {
    return cross_entropy_value(net_->scores(add(inputs_[i], v)), labels_[i]);
}

GradientResult ClassificationLossObjective::value_and_gradient(std::size_t i,
                                                               const Tensor& v) const {
    const DifferentiableScalar loss = input_loss_function(*net_, labels_[i]);
    return evaluate_with_gradient(loss, add(inputs_[i], v));
}

double interpretation_distance(const Network& net, const Interpreter& interpreter,
                               const Tensor& x, const Tensor& x_prime) {
    const InterpretationMap a = interpreter.map(net, x);
    const InterpretationMap b = interpreter.map(net, x_prime);
    const Tensor r = sub(a.values, b.values);
    return dot(r, r);
}

namespace {

struct Pullback {
    double value = 0.0;
    // dD/d(pre-normalization vector): the l1 normalization couples every
    // entry through the norm, giving (-2r + 2(r.I) sign(vec)) / ||vec||_1.
    Tensor w;
};

Pullback distance_pullback(const Tensor& reference_map, const Tensor& vec,
                           const char* context) {
    const double n = l1_norm(vec);
    if (!(n >= 1e-12)) {
        throw DegenerateInterpretationError(std::string(context) +
                                            ": map degenerate at evaluation point");
    }
    const Tensor iu = scaled(vec, 1.0 / n);
    const Tensor r = sub(reference_map, iu);
    const double ri = dot(r, iu);
    Pullback pb;
    pb.value = dot(r, r);
    pb.w = Tensor(vec.shape());
    for (std::size_t k = 0; k < vec.size(); ++k) {
        pb.w[k] = (-2.0 * r[k] + 2.0 * ri * sign_of(vec[k])) / n;
    }
    return pb;
}

}  // namespace

InterpretationDistance interpretation_distance_with_gradient(const Network& net,
                                                             const Interpreter& interpreter,
                                                             const Tensor& reference_map,
                                                             const Tensor& u,
                                                             std::size_t label) {
    if (reference_map.shape() != u.shape()) {
        throw ShapeError("interpretation distance: reference map shape mismatch");
    }
    const DifferentiableScalar score = score_function(net, label);

    if (interpreter.method == InterpretationMethod::simple_gradient) {
        const GradientResult gr = evaluate_with_gradient(score, u);
        const Pullback pb = distance_pullback(reference_map, gr.gradient, "simple gradient");
        Tensor grad = hessian_vector_product(score, u, pb.w);
        return InterpretationDistance{pb.value, std::move(grad)};
    }

    const IGConfig& cfg = interpreter.ig;
    if (cfg.steps == 0) throw ValueError("interpretation distance: zero path steps");
    Tensor reference_point = cfg.reference.empty() ? Tensor(u.shape()) : cfg.reference;
    if (reference_point.shape() != u.shape()) {
        throw ShapeError("interpretation distance: path reference shape mismatch");
    }
    const Tensor delta = sub(u, reference_point);
    const double m = static_cast<double>(cfg.steps);

    std::vector<Tensor> path;
    path.reserve(cfg.steps);
    Tensor grad_sum(u.shape());
    for (std::size_t k = 1; k <= cfg.steps; ++k) {
        Tensor p = reference_point;
        axpy(static_cast<double>(k) / m, delta, p);
        axpy(1.0, evaluate_with_gradient(score, p).gradient, grad_sum);
        path.push_back(std::move(p));
    }
    Tensor v = hadamard(delta, grad_sum);
    for (double& e : v.data()) e /= m;

    const Pullback pb = distance_pullback(reference_map, v, "integrated gradients");

    // v depends on u directly via delta and via every path gradient; the
    // direct part is (grad_sum . w)/m, the path parts are Hessian products
    // against (delta . w)/m weighted by each point's k/m.
    Tensor grad = hadamard(grad_sum, pb.w);
    for (double& e : grad.data()) e /= m;
    Tensor hvec = hadamard(delta, pb.w);
    for (double& e : hvec.data()) e /= m;
    for (std::size_t k = 1; k <= cfg.steps; ++k) {
        axpy(static_cast<double>(k) / m,
             hessian_vector_product(score, path[k - 1], hvec), grad);
    }
    return InterpretationDistance{pb.value, std::move(grad)};
}

std::optional<std::string> UpiGradConfig::validate(double epsilon) const {
    if (!(stepsize > 0.0)) throw ValueError("attack config: stepsize must be > 0");
    if (!(noise_sigma > 0.0)) throw ValueError("attack config: noise sigma must be > 0");
    if (batch_size == 0) throw ValueError("attack config: zero batch size");
    if (draws_per_step == 0) throw ValueError("attack config: zero draws per step");
    if (noise_sigma > epsilon / 10.0) {
        return "noise sigma " + std::to_string(noise_sigma) + " exceeds epsilon/10 = " +
               std::to_string(epsilon / 10.0) +
               "; the smoothing noise is meant to sit well inside the ball";
    }
    return std::nullopt;
}

PerImageAttackResult per_image_fgm_core(const PerturbationObjective& objective,
                                        std::size_t i, const PerturbationBudget& budget,
                                        double sigma, std::uint64_t seed) {
    budget.validate();
    if (!(sigma > 0.0)) throw ValueError("fgm: sigma must be > 0");
    if (i >= objective.sample_count()) throw ValueError("fgm: sample index out of range");
    Rng noise(Rng::derive(seed, kStreamNoise));
    const Tensor z = noise.normal_tensor(objective.shape(), sigma);
    const GradientResult g = objective.value_and_gradient(i, z);
    Tensor delta;
    if (budget.norm == NormKind::l2) {
        const double n = l2_norm(g.gradient);
        if (!(n >= 1e-12)) throw FlatObjectiveError("fgm: objective gradient is zero");
        delta = scaled(g.gradient, budget.epsilon / n);
    } else {
        delta = scaled(sign_of(g.gradient), budget.epsilon);
        if (!(l2_norm(delta) >= 1e-12)) {
            throw FlatObjectiveError("fgm: objective gradient is zero");
        }
    }
    delta = project_to_ball(delta, budget);
    const double objective_value = objective.value(i, delta);
    return PerImageAttackResult{Perturbation(std::move(delta), budget), objective_value};
}

PerImageAttackResult per_image_pgd_core(const PerturbationObjective& objective,
                                        std::size_t i, const PerturbationBudget& budget,
                                        std::size_t iterations, double stepsize, double sigma,
                                        std::uint64_t seed) {
    budget.validate();
    if (iterations == 0) throw ValueError("pgd: needs at least one iteration");
    if (!(stepsize > 0.0)) throw ValueError("pgd: stepsize must be > 0");
    if (!(sigma > 0.0)) throw ValueError("pgd: sigma must be > 0");
    if (i >= objective.sample_count()) throw ValueError("pgd: sample index out of range");

    Rng init(Rng::derive(seed, kStreamInit));
    Tensor delta = project_to_ball(init.normal_tensor(objective.shape(), sigma), budget);
    Rng noise(Rng::derive(seed, kStreamNoise));
    double max_grad = 0.0;
    for (std::size_t t = 0; t < iterations; ++t) {
        const Tensor z = noise.normal_tensor(objective.shape(), sigma);
        const GradientResult g = objective.value_and_gradient(i, add(z, delta));
        max_grad = std::max(max_grad, l2_norm(g.gradient));
        Tensor moved = delta;
        axpy(stepsize, g.gradient, moved);
        delta = project_to_ball(moved, budget);
    }
    if (!(max_grad >= 1e-12)) {
        throw FlatObjectiveError("pgd: objective stayed flat across all iterations");
    }
    const double objective_value = objective.value(i, delta);
    return PerImageAttackResult{Perturbation(std::move(delta), budget), objective_value};
}

namespace {

// Shared skeleton of upi_grad and the classification baseline; the latter
// ascends the plain objective, without smoothing noise in the updates.
UniversalAttackResult universal_ascent(const PerturbationObjective& objective,
                                       const PerturbationBudget& budget,
                                       const UpiGradConfig& cfg, bool smoothing_noise) {
    budget.validate();
    (void)cfg.validate(budget.epsilon);
    const std::size_t n = objective.sample_count();
    if (n == 0) throw ValueError("universal attack: empty objective");
    const Shape& shape = objective.shape();

    Rng init(Rng::derive(cfg.seed, kStreamInit));
    Tensor delta = project_to_ball(init.normal_tensor(shape, cfg.noise_sigma), budget);
    Rng batch_rng(Rng::derive(cfg.seed, kStreamBatch));
    Rng noise(Rng::derive(cfg.seed, kStreamNoise));
    Tensor z_val(shape);
    if (smoothing_noise) {
        Rng trace_rng(Rng::derive(cfg.seed, kStreamTraceNoise));
        z_val = trace_rng.normal_tensor(shape, cfg.noise_sigma);
    }
    const std::size_t trace_n =
        std::min(n, cfg.trace_samples == 0 ? n : cfg.trace_samples);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> trace;
    trace.reserve(cfg.epochs);
    std::size_t skipped = 0;
    Tensor step(shape);
    const double inv_draws = 1.0 / static_cast<double>(cfg.draws_per_step);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        batch_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, n);
            const double inv_b = 1.0 / static_cast<double>(end - start);
            std::fill(step.data().begin(), step.data().end(), 0.0);
            for (std::size_t d = 0; d < cfg.draws_per_step; ++d) {
                Tensor z_shared;
                if (smoothing_noise && !cfg.noise_per_sample) {
                    z_shared = noise.normal_tensor(shape, cfg.noise_sigma);
                }
                for (std::size_t k = start; k < end; ++k) {
                    Tensor point = delta;
                    if (smoothing_noise) {
                        if (cfg.noise_per_sample) {
                            point = add(delta, noise.normal_tensor(shape, cfg.noise_sigma));
                        } else {
                            point = add(delta, z_shared);
                        }
                    }
                    try {
                        const GradientResult g =
                            objective.value_and_gradient(order[k], point);
                        axpy(inv_b * inv_draws, g.gradient, step);
                    } catch (const DegenerateInterpretationError&) {
                        ++skipped;
                    }
                }
            }
            Tensor moved = delta;
            axpy(cfg.stepsize, step, moved);
            delta = project_to_ball(moved, budget);
        }
        const Tensor probe = add(z_val, delta);
        double total = 0.0;
        std::size_t counted = 0;
        for (std::size_t i = 0; i < trace_n; ++i) {
            try {
                total += objective.value(i, probe);
                ++counted;
            } catch (const DegenerateInterpretationError&) {
                ++skipped;
            }
        }
        trace.push_back(counted > 0 ? total / static_cast<double>(counted) : 0.0);
    }
    return UniversalAttackResult{Perturbation(std::move(delta), budget), std::move(trace),
                                 skipped};
}

}  // namespace

UniversalAttackResult upi_grad_core(const PerturbationObjective& objective,
                                    const PerturbationBudget& budget,
                                    const UpiGradConfig& cfg) {
    return universal_ascent(objective, budget, cfg, /*smoothing_noise=*/true);
}

GradientMatrix gradient_matrix_core(const PerturbationObjective& objective, double sigma,
                                    std::size_t draws_per_sample, std::uint64_t seed) {
    if (draws_per_sample == 0) throw ValueError("gradient matrix: draws_per_sample >= 1");
    if (!(sigma > 0.0)) throw ValueError("gradient matrix: sigma must be > 0");
    GradientMatrix m;
    m.row_shape = objective.shape();
    // One z sequence shared by every sample: identical samples then yield
    // identical rows, and draws_per_sample=1 is exactly the per-minibatch z.
    const std::uint64_t noise_seed = Rng::derive(seed, kStreamNoise);
    Rng noise(noise_seed);
    std::vector<Tensor> zs;
    zs.reserve(draws_per_sample);
    for (std::size_t d = 0; d < draws_per_sample; ++d) {
        zs.push_back(noise.normal_tensor(m.row_shape, sigma));
    }
    const double inv_draws = 1.0 / static_cast<double>(draws_per_sample);
    for (std::size_t i = 0; i < objective.sample_count(); ++i) {
        Tensor row(m.row_shape);
        bool ok = true;
        for (const Tensor& z : zs) {
            try {
                axpy(inv_draws, objective.value_and_gradient(i, z).gradient, row);
            } catch (const DegenerateInterpretationError&) {
                ok = false;
                break;
            }
        }
        if (!ok) {
            ++m.skipped;
            continue;
        }
        check_finite(row, "gradient matrix row");
        m.rows.push_back(std::move(row));
        m.provenance.push_back(GradientMatrixRow{i, noise_seed});
    }
    return m;
}

SingularVectorResult top_right_singular_vector_oracle(const GradientMatrix& g) {
    if (g.rows.empty()) throw ValueError("singular vector: matrix has no rows");
    const std::size_t d = g.row_shape.count();

    // v -> G^T G v without forming the Gram matrix.
    const auto apply = [&g](const Tensor& v) {
        Tensor out(v.shape());
        for (const Tensor& row : g.rows) axpy(dot(row, v), row, out);
        return out;
    };

    std::size_t start_col = d;
    for (std::size_t j = 0; j < d && start_col == d; ++j) {
        for (const Tensor& row : g.rows) {
            if (row[j] != 0.0) {
                start_col = j;
                break;
            }
        }
    }
    if (start_col == d) throw ValueError("singular vector: zero matrix");

    const auto power_iterate = [&](Tensor v,
                                   const Tensor* deflate) -> std::pair<Tensor, double> {
        if (deflate != nullptr) {
            axpy(-dot(*deflate, v), *deflate, v);
        }
        double vn = l2_norm(v);
        if (!(vn >= 1e-300)) return {Tensor(v.shape()), 0.0};
        v = scaled(v, 1.0 / vn);
        double lambda = 0.0;
        for (std::size_t iter = 0; iter < 10 * d; ++iter) {
            Tensor w = apply(v);
            if (deflate != nullptr) {
                axpy(-dot(*deflate, w), *deflate, w);
            }
            lambda = dot(v, w);
            Tensor resid = w;
            axpy(-lambda, v, resid);
            if (l2_norm(resid) < 1e-12) break;
            const double wn = l2_norm(w);
            if (!(wn >= 1e-300)) {
                lambda = 0.0;
                break;
            }
            v = scaled(w, 1.0 / wn);
        }
        return {std::move(v), lambda};
    };

    Tensor start(g.row_shape);
    start[start_col] = 1.0;
    auto [v, lambda1] = power_iterate(std::move(start), nullptr);
    if (!(lambda1 > 0.0)) throw ValueError("singular vector: zero matrix");

    // Fix the sign: largest-magnitude entry positive, first index on ties.
    std::size_t top = 0;
    for (std::size_t j = 1; j < v.size(); ++j) {
        if (std::abs(v[j]) > std::abs(v[top])) top = j;
    }
    if (v[top] < 0.0) v = scaled(v, -1.0);

    // Second eigenvalue from one deflated run, for the tie flag.
    Tensor start2(g.row_shape);
    start2[(start_col + 1) % d] = 1.0;
    const auto [v2, lambda2] = power_iterate(std::move(start2), &v);
    (void)v2;

    SingularVectorResult out;
    out.vector = std::move(v);
    out.sigma1 = std::sqrt(std::max(lambda1, 0.0));
    out.sigma2 = std::sqrt(std::max(lambda2, 0.0));
    out.near_tie = (lambda1 - lambda2) < 1e-9 * std::max(lambda1, 1e-300);
    return out;
}

UniversalAttackResult upi_pca_core(const PerturbationObjective& objective,
                                   const PerturbationBudget& budget,
                                   const UpiPcaConfig& cfg) {
    budget.validate();
    if (budget.norm != NormKind::l2) {
        throw ValueError("upi_pca: only l2 budgets are supported");
    }
    (void)cfg.base.validate(budget.epsilon);
    const std::size_t n = objective.sample_count();
    if (n == 0) throw ValueError("upi_pca: empty objective");
    const Shape& shape = objective.shape();
    const double sigma = cfg.base.noise_sigma;

    std::size_t skipped = 0;
    // The pgd variant's rows are converged per-image perturbations; they do
    // not depend on delta, so they are computed once and reused.
    std::vector<std::optional<Tensor>> pgd_rows;
    if (cfg.variant == UpiPcaVariant::pgd) {
        pgd_rows.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            try {
                pgd_rows[i] = per_image_pgd_core(objective, i, budget, cfg.pgd.iterations,
                                                 cfg.pgd.stepsize, sigma,
                                                 Rng::derive(cfg.base.seed, kStreamPgdRows + i))
                                  .perturbation.delta();
            } catch (const DegenerateInterpretationError&) {
                ++skipped;
            } catch (const FlatObjectiveError&) {
                ++skipped;
            }
        }
    }

    Rng init(Rng::derive(cfg.base.seed, kStreamInit));
    Tensor delta = project_to_ball(init.normal_tensor(shape, sigma), budget);
    Rng batch_rng(Rng::derive(cfg.base.seed, kStreamBatch));
    Rng noise(Rng::derive(cfg.base.seed, kStreamNoise));
    Rng trace_rng(Rng::derive(cfg.base.seed, kStreamTraceNoise));
    const Tensor z_val = trace_rng.normal_tensor(shape, sigma);
    const std::size_t trace_n =
        std::min(n, cfg.base.trace_samples == 0 ? n : cfg.base.trace_samples);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> trace;
    trace.reserve(cfg.base.epochs);
    std::size_t row_successes = 0;
    std::size_t row_attempts = 0;
    Tensor step(shape);

    for (std::size_t epoch = 0; epoch < cfg.base.epochs; ++epoch) {
        batch_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.base.batch_size) {
            const std::size_t end = std::min(start + cfg.base.batch_size, n);
            const double inv_b = 1.0 / static_cast<double>(end - start);
            std::fill(step.data().begin(), step.data().end(), 0.0);
            Tensor z_shared;
            if (cfg.variant == UpiPcaVariant::fgm) {
                z_shared = noise.normal_tensor(shape, sigma);
            }
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                ++row_attempts;
                if (cfg.variant == UpiPcaVariant::fgm) {
                    try {
                        const Tensor row =
                            objective.value_and_gradient(i, z_shared).gradient;
                        axpy(inv_b * dot(delta, row), row, step);
                        ++row_successes;
                    } catch (const DegenerateInterpretationError&) {
                        ++skipped;
                    }
                } else {
                    if (!pgd_rows[i]) continue;
                    const Tensor& row = *pgd_rows[i];
                    axpy(inv_b * dot(delta, row), row, step);
                    ++row_successes;
                }
            }
            Tensor moved = delta;
            axpy(cfg.base.stepsize, step, moved);
            delta = project_to_ball(moved, budget);
        }
        const Tensor probe = add(z_val, delta);
        double total = 0.0;
        std::size_t counted = 0;
        for (std::size_t i = 0; i < trace_n; ++i) {
            try {
                total += objective.value(i, probe);
                ++counted;
            } catch (const DegenerateInterpretationError&) {
                ++skipped;
            }
        }
        trace.push_back(counted > 0 ? total / static_cast<double>(counted) : 0.0);
    }
    if (row_attempts > 0 && row_successes == 0) {
        throw DegenerateInterpretationError("upi_pca: every gradient row was degenerate");
    }

    const double dn = l2_norm(delta);
    if (!(dn >= 1e-12)) throw FlatObjectiveError("upi_pca: no direction left after ascent");
    delta = scaled(delta, budget.epsilon / dn);

    // The power method fixes a direction only up to sign; pick the sign with
    // the larger mean objective on a held-out prefix of the samples.
    const std::size_t held = std::min(n, cfg.base.batch_size);
    const Tensor negated = scaled(delta, -1.0);
    double plus = 0.0, minus = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < held; ++i) {
        try {
            const double a = objective.value(i, delta);
            const double b = objective.value(i, negated);
            plus += a;
            minus += b;
            ++counted;
        } catch (const DegenerateInterpretationError&) {
            ++skipped;
        }
    }
    if (counted > 0 && minus > plus) delta = negated;

    return UniversalAttackResult{Perturbation(std::move(delta), budget), std::move(trace),
                                 skipped};
}

std::vector<Perturbation> random_perturbation(const PerturbationBudget& budget,
                                              RandomMode mode, const Shape& shape,
                                              std::size_t count, std::uint64_t seed) {
    budget.validate();
    const std::size_t wanted = mode == RandomMode::universal ? 1 : count;
    if (wanted == 0) throw ValueError("random perturbation: zero count");
    std::vector<Perturbation> out;
    out.reserve(wanted);
    Rng rng(Rng::derive(seed, kStreamNoise));
    for (std::size_t i = 0; i < wanted; ++i) {
        const Tensor v = rng.normal_tensor(shape, 1.0);
        const double n = norm_of(v, budget.norm);
        if (!(n >= 1e-12)) throw ValueError("random perturbation: degenerate draw");
        out.emplace_back(scaled(v, budget.epsilon / n), budget);
    }
    return out;
}

Perturbation random_universal_perturbation(const PerturbationBudget& budget,
                                           const Shape& shape, std::uint64_t seed) {
    return std::move(random_perturbation(budget, RandomMode::universal, shape, 1, seed)[0]);
}

PerImageAttackResult per_image_fgm(const Network& net, const Interpreter& interpreter,
                                   const Tensor& x, const PerturbationBudget& budget,
                                   double sigma, std::uint64_t seed) {
    InterpretationObjective objective(net, interpreter, {x});
    return per_image_fgm_core(objective, 0, budget, sigma, seed);
}

PerImageAttackResult per_image_pgd(const Network& net, const Interpreter& interpreter,
                                   const Tensor& x, const PerturbationBudget& budget,
                                   std::size_t iterations, double stepsize, double sigma,
                                   std::uint64_t seed) {
    InterpretationObjective objective(net, interpreter, {x});
    return per_image_pgd_core(objective, 0, budget, iterations, stepsize, sigma, seed);
}

UniversalAttackResult upi_grad(const Network& net, const Interpreter& interpreter,
                               const Dataset& data, const PerturbationBudget& budget,
                               const UpiGradConfig& cfg) {
    InterpretationObjective objective(net, interpreter, data.images);
    return upi_grad_core(objective, budget, cfg);
}

GradientMatrix gradient_matrix(const Network& net, const Interpreter& interpreter,
                               const Dataset& data, double sigma,
                               std::size_t draws_per_sample, std::uint64_t seed) {
    InterpretationObjective objective(net, interpreter, data.images);
    return gradient_matrix_core(objective, sigma, draws_per_sample, seed);
}

UniversalAttackResult upi_pca(const Network& net, const Interpreter& interpreter,
                              const Dataset& data, const PerturbationBudget& budget,
                              const UpiPcaConfig& cfg) {
    InterpretationObjective objective(net, interpreter, data.images);
    return upi_pca_core(objective, budget, cfg);
}

UniversalAttackResult uap_classification(const Network& net, const Dataset& data,
                                         const PerturbationBudget& budget,
                                         const UpiGradConfig& cfg) {
    data.validate();
    if (data.size() == 0) throw ValueError("uap: empty dataset");
    ClassificationLossObjective objective(net, data.images, data.labels);
    return universal_ascent(objective, budget, cfg, /*smoothing_noise=*/false);
}

}  // namespace upi
