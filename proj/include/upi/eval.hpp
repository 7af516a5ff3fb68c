#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "upi/attack.hpp"
#include "upi/data.hpp"
#include "upi/interpret.hpp"
#include "upi/network.hpp"

namespace upi {

struct EvalOptions {
    // Evaluate clamp01(x + delta) so perturbed inputs stay valid images; the
    // same clamped point is used for prediction and for the map.
    bool clamp_pixels = true;
    // Explain the clean prediction at the perturbed point instead of
    // re-predicting there.
    bool freeze_labels = false;
    // Independent draws for the random baselines; other attacks ignore it.
    std::size_t repeats = 10;
    std::uint64_t seed = 0;
};

struct DissimilarityReport {
    // Aligned: scores[j] belongs to testset sample sample_index[j].
    std::vector<std::size_t> sample_index;
    std::vector<double> scores;
    double mean = 0.0;
    std::size_t count = 0;
    std::size_t skipped_degenerate = 0;
    // Per-repeat means across the test set; filled for random attacks only.
    std::vector<double> repeat_means;
    std::string attack;
    std::size_t repeats = 1;
    bool clamped = true;
    bool frozen_labels = false;
};

struct FoolingReport {
    double fraction = 0.0;
    std::size_t fooled = 0;
    std::size_t count = 0;
};

struct CorrelationMatrix {
    std::vector<std::string> labels;
    std::vector<double> values;  // row-major, size() x size()

    std::size_t size() const { return labels.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i * labels.size() + j]; }
};

// || I(x) - I(x') ||_2 / || I(x) ||_2, each map explaining the network's own
// prediction at its point. Unsquared and scale-free, unlike the squared
// distance the attacks ascend.
double normalized_dissimilarity(const Network& net, const Interpreter& interpreter,
                                const Tensor& x, const Tensor& x_prime);

// What to apply to each test sample before scoring.
struct EvalAttack {
    enum class Kind { universal, fgm, pgd, random_universal, random_per_image };

    Kind kind = Kind::universal;
    std::optional<Perturbation> delta;  // Kind::universal
    PerturbationBudget budget;          // every other kind
    double sigma = (100.0 / 256.0) / 100.0;
    PgdConfig pgd;

    static EvalAttack universal(Perturbation p);
    static EvalAttack per_image_fgm(PerturbationBudget budget, double sigma);
    static EvalAttack per_image_pgd(PerturbationBudget budget, PgdConfig cfg, double sigma);
    static EvalAttack random(PerturbationBudget budget, RandomMode mode);

    std::string describe() const;
};

// Applies the attack to every test sample, scores each with
// normalized_dissimilarity under the report conventions, and averages.
// Samples whose clean or perturbed map degenerates (or whose per-image
// attack finds no gradient) are excluded and counted. Random baselines
// average each sample over `repeats` draws and also record per-repeat means.
DissimilarityReport mean_dissimilarity_report(const Network& net,
                                              const Interpreter& interpreter,
                                              const Dataset& testset,
                                              const EvalAttack& attack,
                                              const EvalOptions& opts = {});

DissimilarityReport mean_dissimilarity_report(const Network& net,
                                              const Interpreter& interpreter,
                                              const Dataset& testset,
                                              const Perturbation& delta,
                                              const EvalOptions& opts = {});

// Fraction of test samples whose top-1 prediction changes under delta.
FoolingReport fooling_rate(const Network& net, const Dataset& testset,
                           const Perturbation& delta, bool clamp_pixels = true);

// Entry (i,j) = delta_i . delta_j / (||delta_i|| ||delta_j||). Labels default
// to delta_0, delta_1, ...
CorrelationMatrix cross_correlation_matrix(const std::vector<Perturbation>& deltas,
                                           std::vector<std::string> labels = {});

// CSV renderings. Column order is part of the format:
//   DissimilarityReport: kind,sample,score,skipped — one "sample" row per
//     scored sample, then one "summary" row carrying mean and skipped count.
//   CorrelationMatrix: label header row, then one row per perturbation.
//   FoolingReport: fooled,count,fraction — a single data row.
std::string to_csv(const DissimilarityReport& report);
std::string to_csv(const CorrelationMatrix& m);
std::string to_csv(const FoolingReport& report);

}  // namespace upi
