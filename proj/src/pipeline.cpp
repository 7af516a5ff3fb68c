#include "upi/pipeline.hpp"

#include <chrono>
#include <filesystem>

#include "json.hpp"
#include "upi/image_io.hpp"
#include "upi/rng.hpp"
#include "upi/serialize.hpp"

namespace upi {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Per-stage seed streams off the experiment seed.
constexpr std::uint64_t kSeedModelInit = 100;
constexpr std::uint64_t kSeedTrain = 101;
constexpr std::uint64_t kSeedTrainData = 201;
constexpr std::uint64_t kSeedTestData = 202;
constexpr std::uint64_t kSeedTrainSubset = 203;
constexpr std::uint64_t kSeedTestSubset = 204;
constexpr std::uint64_t kSeedAttack = 300;
constexpr std::uint64_t kSeedEval = 400;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool is_universal_algorithm(AttackChoice::Algorithm a) {
    switch (a) {
        case AttackChoice::Algorithm::upi_grad:
        case AttackChoice::Algorithm::upi_pca_fgm:
        case AttackChoice::Algorithm::upi_pca_pgd:
        case AttackChoice::Algorithm::uap_classification:
            return true;
        default:
            return false;
    }
}

bool image_shaped(const Shape& s) {
    return s.rank() == 2 || (s.rank() == 3 && s[0] == 1);
}

}  // namespace

std::uint64_t stage_seed(const ExperimentConfig& cfg, const std::string& stage) {
    if (stage == "model_init") return Rng::derive(cfg.seed, kSeedModelInit);
    if (stage == "train") return Rng::derive(cfg.seed, kSeedTrain);
    if (stage == "train_data") return Rng::derive(cfg.seed, kSeedTrainData);
    if (stage == "test_data") return Rng::derive(cfg.seed, kSeedTestData);
    if (stage == "train_subset") return Rng::derive(cfg.seed, kSeedTrainSubset);
    if (stage == "test_subset") return Rng::derive(cfg.seed, kSeedTestSubset);
    if (stage == "attack") return Rng::derive(cfg.seed, kSeedAttack);
    if (stage == "eval") return Rng::derive(cfg.seed, kSeedEval);
    throw ValueError("stage_seed: unknown stage '" + stage + "'");
}

Dataset load_configured_dataset(const ExperimentConfig& cfg, bool test_split) {
    if (cfg.dataset.kind == DatasetConfig::Kind::synthetic) {
        // Train and test come from one generated cloud so both splits share
        // cluster means and the cloud-wide affine rescaling. Labels cycle
        // through the classes, so a prefix/suffix split stays balanced.
        const std::size_t n_train = cfg.dataset.samples;
        const std::size_t n_test = cfg.dataset.test_samples;
        const Dataset full =
            synthetic_blobs(n_train + n_test, cfg.dataset.features, cfg.dataset.classes,
                            cfg.dataset.spread, stage_seed(cfg, "train_data"));
        std::vector<std::size_t> indices;
        indices.reserve(test_split ? n_test : n_train);
        const std::size_t begin = test_split ? n_train : 0;
        const std::size_t end = test_split ? n_train + n_test : n_train;
        for (std::size_t i = begin; i < end; ++i) indices.push_back(i);
        return take(full, indices);
    }
    Dataset d = load_idx_dataset(
        test_split ? cfg.dataset.test_images : cfg.dataset.images,
        test_split ? cfg.dataset.test_labels : cfg.dataset.labels, cfg.dataset.classes);
    const std::size_t count = test_split ? cfg.dataset.test_count : cfg.dataset.train_count;
    if (count > 0 && count < d.size()) {
        d = subset(d, count, stage_seed(cfg, test_split ? "test_subset" : "train_subset"));
    }
    return d;
}

Network build_configured_model(const ExperimentConfig& cfg, const Shape& input_shape,
                               std::size_t classes) {
    const std::uint64_t seed = stage_seed(cfg, "model_init");
    switch (cfg.model.kind) {
        case ModelConfig::Kind::linear:
            return make_linear(input_shape, classes, cfg.model.activation, seed);
        case ModelConfig::Kind::fcn:
            return make_fcn(input_shape, cfg.model.hidden, classes, cfg.model.activation,
                            seed);
        case ModelConfig::Kind::cnn:
            return make_cnn(input_shape, cfg.model.channels, cfg.model.kernel,
                            cfg.model.pool, classes, cfg.model.activation, seed);
    }
    throw ValueError("model config: unknown kind");
}

std::optional<UniversalAttackResult> run_configured_attack(const ExperimentConfig& cfg,
                                                           const Network& net,
                                                           const Dataset& train) {
    UpiGradConfig base = cfg.attack.base;
    base.seed = stage_seed(cfg, "attack");
    switch (cfg.attack.algorithm) {
        case AttackChoice::Algorithm::upi_grad:
            return upi_grad(net, cfg.interpretation, train, cfg.budget, base);
        case AttackChoice::Algorithm::upi_pca_fgm: {
            const UpiPcaConfig pca{base, UpiPcaVariant::fgm, cfg.attack.pgd};
            return upi_pca(net, cfg.interpretation, train, cfg.budget, pca);
        }
        case AttackChoice::Algorithm::upi_pca_pgd: {
            const UpiPcaConfig pca{base, UpiPcaVariant::pgd, cfg.attack.pgd};
            return upi_pca(net, cfg.interpretation, train, cfg.budget, pca);
        }
        case AttackChoice::Algorithm::uap_classification:
            return uap_classification(net, train, cfg.budget, base);
        default:
            return std::nullopt;
    }
}

EvalAttack configured_eval_attack(const ExperimentConfig& cfg,
                                  std::optional<Perturbation> universal) {
    switch (cfg.attack.algorithm) {
        case AttackChoice::Algorithm::per_image_fgm:
            return EvalAttack::per_image_fgm(cfg.budget, cfg.attack.base.noise_sigma);
        case AttackChoice::Algorithm::per_image_pgd:
            return EvalAttack::per_image_pgd(cfg.budget, cfg.attack.pgd,
                                             cfg.attack.base.noise_sigma);
        case AttackChoice::Algorithm::random_universal:
            return EvalAttack::random(cfg.budget, RandomMode::universal);
        case AttackChoice::Algorithm::random_per_image:
            return EvalAttack::random(cfg.budget, RandomMode::per_image);
        default:
            if (!universal) {
                throw ValueError("eval: universal algorithm without a perturbation");
            }
            return EvalAttack::universal(std::move(*universal));
    }
}

std::string run_report_to_json(const RunReport& r) {
    json j;
    j["config"] = json::parse(config_to_json(r.config));
    j["model"] = {
        {"train_accuracy", r.train_accuracy},
        {"test_accuracy", r.test_accuracy},
        {"epoch_loss", r.train_epoch_loss},
    };
    j["attack"] = {{"algorithm", to_string(r.config.attack.algorithm)},
                   {"skipped_evaluations", r.attack_skipped}};
    if (r.attack_trace) j["attack"]["trace"] = *r.attack_trace;
    if (r.dissimilarity) {
        const DissimilarityReport& d = *r.dissimilarity;
        j["dissimilarity"] = {
            {"mean", d.mean},
            {"count", d.count},
            {"skipped_degenerate", d.skipped_degenerate},
            {"attack", d.attack},
            {"repeats", d.repeats},
            {"clamped", d.clamped},
            {"frozen_labels", d.frozen_labels},
        };
        if (!d.repeat_means.empty()) j["dissimilarity"]["repeat_means"] = d.repeat_means;
    }
    if (r.fooling) {
        j["fooling"] = {{"fraction", r.fooling->fraction},
                        {"fooled", r.fooling->fooled},
                        {"count", r.fooling->count}};
    }
    if (!r.fooling_per_repeat.empty()) j["fooling"]["per_repeat"] = r.fooling_per_repeat;
    if (r.correlations) {
        j["correlations"] = {{"labels", r.correlations->labels},
                             {"values", r.correlations->values}};
    }
    j["timings"] = json::array();
    for (const StageTiming& t : r.timings) {
        j["timings"].push_back({{"stage", t.stage}, {"seconds", t.seconds}});
    }
    j["manifest"] = json::array();
    for (const ArtifactEntry& a : r.manifest) {
        j["manifest"].push_back({{"path", a.path}, {"complete", a.complete}});
    }
    return j.dump(2) + "\n";
}

RunReport run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    RunReport report;
    report.config = cfg;

    const fs::path out(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) {
        throw StageError("setup", "cannot create output directory " + out.string());
    }

    // Manifest discipline: an entry appears when writing starts; complete
    // flips on success; an entry whose file never materialized is dropped.
    const auto guarded_write = [&report](const fs::path& p, auto&& writer) {
        report.manifest.push_back({p.string(), false});
        const std::size_t idx = report.manifest.size() - 1;
        try {
            writer();
            report.manifest[idx].complete = true;
        } catch (...) {
            if (!fs::exists(p)) {
                report.manifest.erase(report.manifest.begin() +
                                      static_cast<std::ptrdiff_t>(idx));
            }
            throw;
        }
    };

    const auto timed = [&report](const std::string& stage, auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const StageError&) {
            report.timings.push_back({stage, seconds_since(t0)});
            throw;
        } catch (const std::exception& e) {
            report.timings.push_back({stage, seconds_since(t0)});
            throw StageError(stage, e.what());
        }
        report.timings.push_back({stage, seconds_since(t0)});
    };

    Dataset train, test;
    std::optional<Network> net;
    std::optional<Perturbation> universal;

    const auto body = [&] {
        timed("dataset", [&] {
            train = load_configured_dataset(cfg, false);
            test = load_configured_dataset(cfg, true);
        });

        timed("train", [&] {
            net = build_configured_model(cfg, train.images.front().shape(),
                                         train.class_count);
            TrainConfig tc = cfg.model.train;
            tc.seed = stage_seed(cfg, "train");
            const TrainReport tr = train_erm(*net, train, tc);
            report.train_epoch_loss = tr.epoch_loss;
            report.train_accuracy = tr.train_accuracy;
            report.test_accuracy = accuracy(*net, test);
            guarded_write(out / "model.upnc", [&] { save_network(*net, out / "model.upnc"); });
            std::string csv = "epoch,loss\n";
            for (std::size_t e = 0; e < tr.epoch_loss.size(); ++e) {
                csv += std::to_string(e) + "," + format_g17(tr.epoch_loss[e]) + "\n";
            }
            guarded_write(out / "training.csv",
                          [&] { write_text_file((out / "training.csv").string(), csv); });
        });

        timed("attack", [&] {
            const std::optional<UniversalAttackResult> result =
                run_configured_attack(cfg, *net, train);
            if (!result) return;
            report.attack_trace = result->epoch_objective;
            report.attack_skipped = result->skipped_evaluations;
            universal = result->perturbation;

            guarded_write(out / "perturbation.json", [&] {
                save_perturbation(*universal, to_string(cfg.attack.algorithm),
                                  stage_seed(cfg, "attack"),
                                  (out / "perturbation.json").string());
            });
            std::string csv = "epoch,objective\n";
            for (std::size_t e = 0; e < result->epoch_objective.size(); ++e) {
                csv += std::to_string(e) + "," + format_g17(result->epoch_objective[e]) +
                       "\n";
            }
            guarded_write(out / "trace.csv",
                          [&] { write_text_file((out / "trace.csv").string(), csv); });

            if (image_shaped(universal->delta().shape())) {
                guarded_write(out / "perturbation.pgm", [&] {
                    export_perturbation_image(*universal,
                                              (out / "perturbation.pgm").string());
                });
                report.manifest.push_back(
                    {(out / "perturbation.pgm").string() + ".map.txt", true});
                try {
                    guarded_write(out / "panel.pgm", [&] {
                        export_interpretation_panel(*net, cfg.interpretation,
                                                    test.images.front(), *universal,
                                                    (out / "panel.pgm").string());
                    });
                } catch (const DegenerateInterpretationError&) {
                    // The panel is best-effort: a degenerate map at either
                    // point just means no picture for this run.
                }
            }
        });

        timed("eval", [&] {
            EvalOptions opts = cfg.eval;
            opts.seed = stage_seed(cfg, "eval");
            const EvalAttack ea = configured_eval_attack(cfg, universal);
            report.dissimilarity =
                mean_dissimilarity_report(*net, cfg.interpretation, test, ea, opts);
            guarded_write(out / "dissimilarity.csv", [&] {
                write_text_file((out / "dissimilarity.csv").string(),
                                to_csv(*report.dissimilarity));
            });

            if (universal) {
                report.fooling = fooling_rate(*net, test, *universal, opts.clamp_pixels);
            } else if (cfg.attack.algorithm == AttackChoice::Algorithm::random_universal) {
                std::vector<Perturbation> draws;
                FoolingReport pooled;
                for (std::size_t r = 0; r < opts.repeats; ++r) {
                    Perturbation d = random_universal_perturbation(
                        cfg.budget, net->input_shape(), Rng::derive(opts.seed, r));
                    const FoolingReport f = fooling_rate(*net, test, d, opts.clamp_pixels);
                    report.fooling_per_repeat.push_back(f.fraction);
                    pooled.fooled += f.fooled;
                    pooled.count += f.count;
                    draws.push_back(std::move(d));
                }
                pooled.fraction =
                    static_cast<double>(pooled.fooled) / static_cast<double>(pooled.count);
                report.fooling = pooled;
                if (draws.size() >= 2) {
                    std::vector<std::string> labels;
                    for (std::size_t r = 0; r < draws.size(); ++r) {
                        labels.push_back("draw_" + std::to_string(r));
                    }
                    report.correlations = cross_correlation_matrix(draws, labels);
                    guarded_write(out / "correlations.csv", [&] {
                        write_text_file((out / "correlations.csv").string(),
                                        to_csv(*report.correlations));
                    });
                }
            }
            if (report.fooling) {
                guarded_write(out / "fooling.csv", [&] {
                    write_text_file((out / "fooling.csv").string(),
                                    to_csv(*report.fooling));
                });
            }
        });
    };

    try {
        body();
    } catch (const StageError&) {
        // Best-effort partial report so the manifest flags what exists.
        try {
            report.manifest.push_back({(out / "run_report.json").string(), true});
            write_text_file((out / "run_report.json").string(), run_report_to_json(report));
        } catch (...) {
            report.manifest.pop_back();
        }
        throw;
    }

    report.manifest.push_back({(out / "run_report.json").string(), true});
    write_text_file((out / "run_report.json").string(), run_report_to_json(report));
    return report;
}

}  // namespace upi
