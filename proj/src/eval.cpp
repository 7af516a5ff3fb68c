#include "upi/eval.hpp"

#include <algorithm>
#include <cmath>

#include "upi/rng.hpp"
#include "upi/serialize.hpp"

namespace upi {

double normalized_dissimilarity(const Network& net, const Interpreter& interpreter,
                                const Tensor& x, const Tensor& x_prime) {
    const InterpretationMap a = interpreter.map(net, x);
    const InterpretationMap b = interpreter.map(net, x_prime);
    const Tensor r = sub(a.values, b.values);
    // a.values has l1 norm 1, so its l2 norm is strictly positive.
    return l2_norm(r) / l2_norm(a.values);
}

EvalAttack EvalAttack::universal(Perturbation p) {
    EvalAttack a;
    a.kind = Kind::universal;
    a.budget = p.budget();
    a.delta = std::move(p);
    return a;
}

EvalAttack EvalAttack::per_image_fgm(PerturbationBudget budget, double sigma) {
    EvalAttack a;
    a.kind = Kind::fgm;
    a.budget = budget;
    a.sigma = sigma;
    return a;
}

EvalAttack EvalAttack::per_image_pgd(PerturbationBudget budget, PgdConfig cfg, double sigma) {
    EvalAttack a;
    a.kind = Kind::pgd;
    a.budget = budget;
    a.pgd = cfg;
    a.sigma = sigma;
    return a;
}

EvalAttack EvalAttack::random(PerturbationBudget budget, RandomMode mode) {
    EvalAttack a;
    a.kind = mode == RandomMode::universal ? Kind::random_universal : Kind::random_per_image;
    a.budget = budget;
    return a;
}

std::string EvalAttack::describe() const {
    const std::string eps = "eps=" + format_g17(budget.epsilon) + "," + to_string(budget.norm);
    switch (kind) {
        case Kind::universal:
            return "universal(" + eps + ")";
        case Kind::fgm:
            return "per_image_fgm(" + eps + ",sigma=" + format_g17(sigma) + ")";
        case Kind::pgd:
            return "per_image_pgd(" + eps + ",iterations=" + std::to_string(pgd.iterations) +
                   ",stepsize=" + format_g17(pgd.stepsize) + ",sigma=" + format_g17(sigma) +
                   ")";
        case Kind::random_universal:
            return "random_universal(" + eps + ")";
        case Kind::random_per_image:
            return "random_per_image(" + eps + ")";
    }
    return "unknown";
}

namespace {

Tensor perturbed_input(const Tensor& x, const Tensor& delta, bool clamp) {
    Tensor xp = add(x, delta);
    return clamp ? clamp01(xp) : xp;
}

}  // namespace

DissimilarityReport mean_dissimilarity_report(const Network& net,
                                              const Interpreter& interpreter,
                                              const Dataset& testset,
                                              const EvalAttack& attack,
                                              const EvalOptions& opts) {
    const std::size_t n = testset.size();
    if (n == 0) throw ValueError("dissimilarity report: empty test set");

    const bool random_kind = attack.kind == EvalAttack::Kind::random_universal ||
                             attack.kind == EvalAttack::Kind::random_per_image;
    if (random_kind && opts.repeats == 0) {
        throw ValueError("dissimilarity report: zero repeats");
    }

    DissimilarityReport report;
    report.attack = attack.describe();
    report.repeats = random_kind ? opts.repeats : 1;
    report.clamped = opts.clamp_pixels;
    report.frozen_labels = opts.freeze_labels;

    // Clean maps once; degenerate samples never enter any mean.
    std::vector<std::optional<InterpretationMap>> clean(n);
    for (std::size_t i = 0; i < n; ++i) {
        try {
            clean[i] = interpreter.map(net, testset.images[i]);
        } catch (const DegenerateInterpretationError&) {
            ++report.skipped_degenerate;
        }
    }

    const auto score_one = [&](std::size_t i, const Tensor& delta) -> std::optional<double> {
        const Tensor xp = perturbed_input(testset.images[i], delta, opts.clamp_pixels);
        const std::optional<std::size_t> label =
            opts.freeze_labels ? std::optional<std::size_t>(clean[i]->label) : std::nullopt;
        try {
            const InterpretationMap b = interpreter.map(net, xp, label);
            const Tensor r = sub(clean[i]->values, b.values);
            return l2_norm(r) / l2_norm(clean[i]->values);
        } catch (const DegenerateInterpretationError&) {
            return std::nullopt;
        }
    };

    switch (attack.kind) {
        case EvalAttack::Kind::universal: {
            if (!attack.delta) {
                throw ValueError("dissimilarity report: missing universal perturbation");
            }
            if (attack.delta->delta().shape() != net.input_shape()) {
                throw ShapeError("dissimilarity report: perturbation shape mismatch");
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (!clean[i]) continue;
                if (const auto s = score_one(i, attack.delta->delta())) {
                    report.sample_index.push_back(i);
                    report.scores.push_back(*s);
                } else {
                    ++report.skipped_degenerate;
                }
            }
            break;
        }
        case EvalAttack::Kind::fgm:
        case EvalAttack::Kind::pgd: {
            for (std::size_t i = 0; i < n; ++i) {
                if (!clean[i]) continue;
                try {
                    const InterpretationObjective one(net, interpreter,
                                                      {testset.images[i]},
                                                      opts.freeze_labels);
                    const std::uint64_t sample_seed = Rng::derive(opts.seed, i);
                    const PerImageAttackResult r =
                        attack.kind == EvalAttack::Kind::fgm
                            ? per_image_fgm_core(one, 0, attack.budget, attack.sigma,
                                                 sample_seed)
                            : per_image_pgd_core(one, 0, attack.budget,
                                                 attack.pgd.iterations, attack.pgd.stepsize,
                                                 attack.sigma, sample_seed);
                    if (const auto s = score_one(i, r.perturbation.delta())) {
                        report.sample_index.push_back(i);
                        report.scores.push_back(*s);
                    } else {
                        ++report.skipped_degenerate;
                    }
                } catch (const DegenerateInterpretationError&) {
                    ++report.skipped_degenerate;
                } catch (const FlatObjectiveError&) {
                    ++report.skipped_degenerate;
                }
            }
            break;
        }
        case EvalAttack::Kind::random_universal:
        case EvalAttack::Kind::random_per_image: {
            std::vector<double> sum(n, 0.0);
            std::vector<std::size_t> hits(n, 0);
            for (std::size_t r = 0; r < opts.repeats; ++r) {
                const std::uint64_t draw_seed = Rng::derive(opts.seed, r);
                std::vector<Perturbation> draws =
                    attack.kind == EvalAttack::Kind::random_universal
                        ? random_perturbation(attack.budget, RandomMode::universal,
                                              net.input_shape(), 1, draw_seed)
                        : random_perturbation(attack.budget, RandomMode::per_image,
                                              net.input_shape(), n, draw_seed);
                double repeat_total = 0.0;
                std::size_t repeat_count = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (!clean[i]) continue;
                    const Tensor& delta = attack.kind == EvalAttack::Kind::random_universal
                                              ? draws[0].delta()
                                              : draws[i].delta();
                    if (const auto s = score_one(i, delta)) {
                        sum[i] += *s;
                        ++hits[i];
                        repeat_total += *s;
                        ++repeat_count;
                    } else {
                        ++report.skipped_degenerate;
                    }
                }
                report.repeat_means.push_back(
                    repeat_count > 0 ? repeat_total / static_cast<double>(repeat_count)
                                     : 0.0);
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (hits[i] == 0) continue;
                report.sample_index.push_back(i);
                report.scores.push_back(sum[i] / static_cast<double>(hits[i]));
            }
            break;
        }
    }

    report.count = report.scores.size();
    double total = 0.0;
    for (const double s : report.scores) total += s;
    report.mean = report.count > 0 ? total / static_cast<double>(report.count) : 0.0;
    return report;
}

DissimilarityReport mean_dissimilarity_report(const Network& net,
                                              const Interpreter& interpreter,
                                              const Dataset& testset,
                                              const Perturbation& delta,
                                              const EvalOptions& opts) {
    return mean_dissimilarity_report(net, interpreter, testset,
                                     EvalAttack::universal(delta), opts);
}

FoolingReport fooling_rate(const Network& net, const Dataset& testset,
                           const Perturbation& delta, bool clamp_pixels) {
    const std::size_t n = testset.size();
    if (n == 0) throw ValueError("fooling rate: empty test set");
    if (delta.delta().shape() != net.input_shape()) {
        throw ShapeError("fooling rate: perturbation shape mismatch");
    }
    std::size_t fooled = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t before = net.predict(testset.images[i]);
        const std::size_t after =
            net.predict(perturbed_input(testset.images[i], delta.delta(), clamp_pixels));
        if (before != after) ++fooled;
    }
    FoolingReport report;
    report.fooled = fooled;
    report.count = n;
    report.fraction = static_cast<double>(fooled) / static_cast<double>(n);
    return report;
}

CorrelationMatrix cross_correlation_matrix(const std::vector<Perturbation>& deltas,
                                           std::vector<std::string> labels) {
    if (deltas.empty()) throw ValueError("cross correlation: no perturbations");
    if (!labels.empty() && labels.size() != deltas.size()) {
        throw ValueError("cross correlation: label count mismatch");
    }
    const std::size_t n = deltas.size();
    const Shape& shape = deltas[0].delta().shape();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (deltas[i].delta().shape() != shape) {
            throw ShapeError("cross correlation: perturbation shapes differ");
        }
        norms[i] = l2_norm(deltas[i].delta());
        if (!(norms[i] > 0.0)) {
            throw ValueError("cross correlation: zero perturbation at index " +
                             std::to_string(i));
        }
    }
    CorrelationMatrix m;
    if (labels.empty()) {
        for (std::size_t i = 0; i < n; ++i) m.labels.push_back("delta_" + std::to_string(i));
    } else {
        m.labels = std::move(labels);
    }
    m.values.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        m.values[i * n + i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            double c = dot(deltas[i].delta(), deltas[j].delta()) / (norms[i] * norms[j]);
            c = std::min(1.0, std::max(-1.0, c));
            m.values[i * n + j] = c;
            m.values[j * n + i] = c;
        }
    }
    return m;
}

std::string to_csv(const DissimilarityReport& report) {
    std::string out = "kind,sample,score,skipped\n";
    for (std::size_t j = 0; j < report.scores.size(); ++j) {
        out += "sample," + std::to_string(report.sample_index[j]) + "," +
               format_g17(report.scores[j]) + ",\n";
    }
    out += "summary,," + format_g17(report.mean) + "," +
           std::to_string(report.skipped_degenerate) + "\n";
    return out;
}

std::string to_csv(const CorrelationMatrix& m) {
    std::string out = "label";
    for (const std::string& l : m.labels) out += "," + csv_field(l);
    out += "\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        out += csv_field(m.labels[i]);
        for (std::size_t j = 0; j < m.size(); ++j) out += "," + format_g17(m.at(i, j));
        out += "\n";
    }
    return out;
}

std::string to_csv(const FoolingReport& report) {
    return "fooled,count,fraction\n" + std::to_string(report.fooled) + "," +
           std::to_string(report.count) + "," + format_g17(report.fraction) + "\n";
}

}  // namespace upi
