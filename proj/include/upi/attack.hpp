#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "upi/data.hpp"
#include "upi/interpret.hpp"
#include "upi/network.hpp"

namespace upi {

enum class NormKind { l2, linf };

NormKind norm_kind_from_string(const std::string& name);
std::string to_string(NormKind norm);

struct PerturbationBudget {
    double epsilon = 100.0 / 256.0;
    NormKind norm = NormKind::l2;

    void validate() const;
};

double norm_of(const Tensor& t, NormKind norm);

// l2: v scaled by min(1, eps/||v||); linf: entrywise clip to [-eps, eps].
Tensor project_to_ball(const Tensor& v, const PerturbationBudget& budget);

// A perturbation that provably fits its budget: the constructor rejects
// anything outside the ball by more than 1e-9, so feasibility is carried by
// the type from then on.
class Perturbation {
public:
    Perturbation(Tensor delta, PerturbationBudget budget);

    const Tensor& delta() const { return delta_; }
    const PerturbationBudget& budget() const { return budget_; }

private:
    Tensor delta_;
    PerturbationBudget budget_;
};

// Family of per-sample objectives D_i over a perturbation v; the universal
// algorithms ascend the mean of D_i(z + delta) over samples. Smoothing noise
// is the algorithms' business, so implementations see only the combined v.
class PerturbationObjective {
public:
    virtual ~PerturbationObjective() = default;
    virtual std::size_t sample_count() const = 0;
    virtual const Shape& shape() const = 0;
    virtual double value(std::size_t i, const Tensor& v) const = 0;
    virtual GradientResult value_and_gradient(std::size_t i, const Tensor& v) const = 0;
};

// D_i(v) = || I(x_i) - I(x_i + v) ||_2^2 between interpretation maps. Clean
// maps are computed once at construction; samples whose clean map is
// degenerate are dropped and listed in skipped_inputs. By default the
// explained class is re-predicted at the perturbed point; freeze_labels
// keeps the clean label instead.
//
// Holds a reference to the network; it must outlive the objective.
class InterpretationObjective : public PerturbationObjective {
public:
    InterpretationObjective(const Network& net, Interpreter interpreter,
                            std::vector<Tensor> inputs, bool freeze_labels = false);

    std::size_t sample_count() const override { return inputs_.size(); }
    const Shape& shape() const override { return net_->input_shape(); }
    double value(std::size_t i, const Tensor& v) const override;
    GradientResult value_and_gradient(std::size_t i, const Tensor& v) const override;

    const std::vector<std::size_t>& skipped_inputs() const { return skipped_; }
    const Tensor& clean_map(std::size_t i) const { return clean_maps_[i]; }
    std::size_t clean_label(std::size_t i) const { return clean_labels_[i]; }

private:
    const Network* net_;
    Interpreter interpreter_;
    std::vector<Tensor> inputs_;
    std::vector<Tensor> clean_maps_;
    std::vector<std::size_t> clean_labels_;
    std::vector<std::size_t> skipped_;
    bool freeze_labels_;
};

// D_i(v) = cross-entropy of the true label at x_i + v; ascending it is the
// classification-UAP baseline. Holds a reference to the network.
class ClassificationLossObjective : public PerturbationObjective {
public:
    ClassificationLossObjective(const Network& net, std::vector<Tensor> inputs,
                                std::vector<std::size_t> labels);

    std::size_t sample_count() const override { return inputs_.size(); }
    const Shape& shape() const override { return net_->input_shape(); }
    double value(std::size_t i, const Tensor& v) const override;
    GradientResult value_and_gradient(std::size_t i, const Tensor& v) const override;

private:
    const Network* net_;
    std::vector<Tensor> inputs_;
    std::vector<std::size_t> labels_;
};

// Squared l2 distance between the maps at x and x_prime, each explaining the
// network's own prediction at that point.
double interpretation_distance(const Network& net, const Interpreter& interpreter,
                               const Tensor& x, const Tensor& x_prime);

struct InterpretationDistance {
    double value = 0.0;
    Tensor gradient;  // with respect to the evaluation point u
};

// || reference_map - I(u) ||_2^2 and its exact gradient in u, with the
// explained class pinned to label. The map's l1 normalization makes the
// gradient a Hessian-vector product of the score; this routine is the
// analytic chain rule, validated against finite differences in the tests.
InterpretationDistance interpretation_distance_with_gradient(const Network& net,
                                                             const Interpreter& interpreter,
                                                             const Tensor& reference_map,
                                                             const Tensor& u,
                                                             std::size_t label);

struct UpiGradConfig {
    double stepsize = 0.5;
    double noise_sigma = (100.0 / 256.0) / 100.0;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    // Redraw z per sample instead of once per minibatch.
    bool noise_per_sample = false;
    // Average the update gradient over this many z draws per step.
    std::size_t draws_per_step = 1;
    // The per-epoch objective trace uses at most this many samples.
    std::size_t trace_samples = 512;

    // Throws on nonpositive fields; returns an advisory when sigma exceeds
    // epsilon/10, since the noise is meant to be much smaller than the ball.
    std::optional<std::string> validate(double epsilon) const;
};

enum class UpiPcaVariant { fgm, pgd };

struct PgdConfig {
    std::size_t iterations = 150;
    double stepsize = 0.5;
};

struct UpiPcaConfig {
    UpiGradConfig base;
    UpiPcaVariant variant = UpiPcaVariant::fgm;
    PgdConfig pgd;
};

struct UniversalAttackResult {
    Perturbation perturbation;
    // Mean objective over the trace subset after each epoch, evaluated with
    // one fixed validation noise draw so epochs are comparable.
    std::vector<double> epoch_objective;
    // Sample evaluations skipped because the perturbed map degenerated.
    std::size_t skipped_evaluations = 0;
};

struct PerImageAttackResult {
    Perturbation perturbation;
    // Final noise-free objective D_i(delta).
    double objective = 0.0;
};

// Single-step ascent: z ~ N(0, sigma^2), g = grad D_i at z, then epsilon
// times the unit gradient (l2) or epsilon times its sign (linf).
PerImageAttackResult per_image_fgm_core(const PerturbationObjective& objective,
                                        std::size_t i, const PerturbationBudget& budget,
                                        double sigma, std::uint64_t seed);

// Projected ascent from projected noise, fresh z each iteration:
// delta <- project(delta + stepsize * grad D_i(z + delta)).
PerImageAttackResult per_image_pgd_core(const PerturbationObjective& objective,
                                        std::size_t i, const PerturbationBudget& budget,
                                        std::size_t iterations, double stepsize, double sigma,
                                        std::uint64_t seed);

// Universal ascent on the mean objective: delta starts as projected noise;
// each minibatch draws z and steps by (stepsize/|B|) sum_i grad D_i(z+delta),
// then projects.
UniversalAttackResult upi_grad_core(const PerturbationObjective& objective,
                                    const PerturbationBudget& budget,
                                    const UpiGradConfig& cfg);

struct GradientMatrixRow {
    std::size_t sample_index = 0;
    std::uint64_t noise_seed = 0;
};

struct GradientMatrix {
    Shape row_shape;
    std::vector<Tensor> rows;
    std::vector<GradientMatrixRow> provenance;
    std::size_t skipped = 0;
};

// Row i = mean over draws of grad_z D_i(z). The z draws are shared across
// samples (the per-minibatch convention), so identical samples give
// identical rows. Degenerate samples are skipped and counted.
GradientMatrix gradient_matrix_core(const PerturbationObjective& objective, double sigma,
                                    std::size_t draws_per_sample, std::uint64_t seed);

// Stochastic power iteration on the rows G_i: per minibatch,
// delta <- project(delta + (stepsize/|B|) sum_i (delta . G_i) G_i). The fgm
// variant recomputes rows as grad D_i(z) with a fresh shared z per batch;
// the pgd variant precomputes one converged per-image perturbation per
// sample and reuses it. l2 budgets only; the result is rescaled to exactly
// ||delta||_2 = epsilon and its sign picked by the larger mean objective on
// a held-out prefix of the samples.
UniversalAttackResult upi_pca_core(const PerturbationObjective& objective,
                                   const PerturbationBudget& budget, const UpiPcaConfig& cfg);

struct SingularVectorResult {
    Tensor vector;  // unit l2, largest-magnitude entry positive
    double sigma1 = 0.0;
    double sigma2 = 0.0;
    // Top two singular values within relative 1e-9: the direction is then
    // arbitrary within the tied subspace.
    bool near_tie = false;
};

// Deterministic power iteration on G^T G: start at the first canonical basis
// vector with a nonzero column, run 10*d iterations or to residual < 1e-12.
// The reference answer upi_pca is checked against.
SingularVectorResult top_right_singular_vector_oracle(const GradientMatrix& g);

enum class RandomMode { universal, per_image };

// Standard normal draws rescaled to exactly epsilon in the budget norm:
// universal gives one vector, per_image gives count of them.
std::vector<Perturbation> random_perturbation(const PerturbationBudget& budget,
                                              RandomMode mode, const Shape& shape,
                                              std::size_t count, std::uint64_t seed);

Perturbation random_universal_perturbation(const PerturbationBudget& budget,
                                           const Shape& shape, std::uint64_t seed);

// Wrappers binding the cores to a network, interpreter, and dataset.
PerImageAttackResult per_image_fgm(const Network& net, const Interpreter& interpreter,
                                   const Tensor& x, const PerturbationBudget& budget,
                                   double sigma, std::uint64_t seed);
PerImageAttackResult per_image_pgd(const Network& net, const Interpreter& interpreter,
                                   const Tensor& x, const PerturbationBudget& budget,
                                   std::size_t iterations, double stepsize, double sigma,
                                   std::uint64_t seed);
UniversalAttackResult upi_grad(const Network& net, const Interpreter& interpreter,
                               const Dataset& data, const PerturbationBudget& budget,
                               const UpiGradConfig& cfg);
GradientMatrix gradient_matrix(const Network& net, const Interpreter& interpreter,
                               const Dataset& data, double sigma,
                               std::size_t draws_per_sample, std::uint64_t seed);
UniversalAttackResult upi_pca(const Network& net, const Interpreter& interpreter,
                              const Dataset& data, const PerturbationBudget& budget,
                              const UpiPcaConfig& cfg);
UniversalAttackResult uap_classification(const Network& net, const Dataset& data,
                                         const PerturbationBudget& budget,
                                         const UpiGradConfig& cfg);

}  // namespace upi
