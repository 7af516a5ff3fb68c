#pragma once

#include <optional>
#include <string>
#include <vector>

#include "upi/config.hpp"
#include "upi/eval.hpp"
#include "upi/train.hpp"

namespace upi {

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct ArtifactEntry {
    std::string path;
    bool complete = false;
};

struct RunReport {
    ExperimentConfig config;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::vector<double> train_epoch_loss;
    // Per-epoch objective trace of the universal ascent, when one ran.
    std::optional<std::vector<double>> attack_trace;
    std::size_t attack_skipped = 0;
    std::optional<DissimilarityReport> dissimilarity;
    std::optional<FoolingReport> fooling;
    // Random-universal baselines: fooled fraction of each repeat draw.
    std::vector<double> fooling_per_repeat;
    std::optional<CorrelationMatrix> correlations;
    std::vector<StageTiming> timings;  // wall clock; lives only in the JSON report
    std::vector<ArtifactEntry> manifest;
};

std::string run_report_to_json(const RunReport& report);

// dataset -> train -> attack -> eval -> artifacts, every stage seeded from
// config.seed. Artifacts land in config.output_dir; CSV contents depend only
// on (config, seed). A failing stage surfaces as StageError tagged with the
// stage name after a partial run_report.json (incomplete artifacts flagged)
// is written.
RunReport run_experiment(const ExperimentConfig& cfg);

// Stage building blocks, shared by run_experiment and the CLI subcommands.
Dataset load_configured_dataset(const ExperimentConfig& cfg, bool test_split);
Network build_configured_model(const ExperimentConfig& cfg, const Shape& input_shape,
                               std::size_t classes);
// Universal algorithms return the ascent result; per-image and random
// configurations return nullopt (they are realized at evaluation time).
std::optional<UniversalAttackResult> run_configured_attack(const ExperimentConfig& cfg,
                                                           const Network& net,
                                                           const Dataset& train);
EvalAttack configured_eval_attack(const ExperimentConfig& cfg,
                                  std::optional<Perturbation> universal);

// Derived per-stage seeds, so the CLI's incremental subcommands reproduce
// exactly what run_experiment does.
std::uint64_t stage_seed(const ExperimentConfig& cfg, const std::string& stage);

}  // namespace upi
