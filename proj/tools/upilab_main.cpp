// upilab: train small classifiers, craft universal perturbations that move
// their saliency maps, evaluate the damage, and run the numerical checks
// behind the method. One experiment per invocation; everything is seeded.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "upi/image_io.hpp"
#include "upi/pipeline.hpp"
#include "upi/rng.hpp"
#include "upi/serialize.hpp"
#include "upi/theory.hpp"

namespace fs = std::filesystem;
using namespace upi;

namespace {

// Tag any library error with the stage it happened in; exit messages read
// "[stage] what went wrong".
template <typename F>
void stage(const std::string& name, F&& fn) {
    try {
        fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

bool image_shaped(const Shape& s) {
    return s.rank() == 2 || (s.rank() == 3 && s[0] == 1);
}

bool stored_perturbation_algorithm(AttackChoice::Algorithm a) {
    switch (a) {
        case AttackChoice::Algorithm::per_image_fgm:
        case AttackChoice::Algorithm::per_image_pgd:
        case AttackChoice::Algorithm::random_universal:
        case AttackChoice::Algorithm::random_per_image:
            return false;
        default:
            return true;
    }
}

std::string epoch_csv(const char* header, const std::vector<double>& values) {
    std::string csv = std::string(header) + "\n";
    for (std::size_t e = 0; e < values.size(); ++e) {
        csv += std::to_string(e) + "," + format_g17(values[e]) + "\n";
    }
    return csv;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw StageError("setup", "cannot create output directory " + dir);
}

int cmd_train(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg.output_dir);
    const fs::path out(cfg.output_dir);
    Dataset train, test;
    stage("dataset", [&] {
        train = load_configured_dataset(cfg, false);
        test = load_configured_dataset(cfg, true);
    });
    std::optional<Network> net;
    TrainReport tr;
    stage("train", [&] {
        net = build_configured_model(cfg, train.images.front().shape(), train.class_count);
        TrainConfig tc = cfg.model.train;
        tc.seed = stage_seed(cfg, "train");
        tr = train_erm(*net, train, tc);
        save_network(*net, out / "model.upnc");
        write_text_file((out / "training.csv").string(), epoch_csv("epoch,loss", tr.epoch_loss));
    });
    std::printf("train accuracy %.4f, test accuracy %.4f\n", tr.train_accuracy,
                accuracy(*net, test));
    std::printf("wrote %s\n", (out / "model.upnc").string().c_str());
    return 0;
}

int cmd_attack(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg.output_dir);
    const fs::path out(cfg.output_dir);
    std::optional<Network> net;
    stage("attack", [&] {
        const fs::path model_path = out / "model.upnc";
        if (!fs::exists(model_path)) {
            throw IoError("model checkpoint not found: " + model_path.string() +
                          " (run the train subcommand first)");
        }
        net = load_network(model_path);
    });
    Dataset train, test;
    stage("dataset", [&] {
        train = load_configured_dataset(cfg, false);
        test = load_configured_dataset(cfg, true);
    });
    std::optional<UniversalAttackResult> result;
    stage("attack", [&] {
        result = run_configured_attack(cfg, *net, train);
        if (!result) {
            throw ValueError("algorithm '" + to_string(cfg.attack.algorithm) +
                             "' is realized per test image at evaluation time; use the "
                             "eval subcommand");
        }
        save_perturbation(result->perturbation, to_string(cfg.attack.algorithm),
                          stage_seed(cfg, "attack"), (out / "perturbation.json").string());
        write_text_file((out / "trace.csv").string(),
                        epoch_csv("epoch,objective", result->epoch_objective));
        if (image_shaped(result->perturbation.delta().shape())) {
            export_perturbation_image(result->perturbation,
                                      (out / "perturbation.pgm").string());
            try {
                export_interpretation_panel(*net, cfg.interpretation, test.images.front(),
                                            result->perturbation,
                                            (out / "panel.pgm").string());
            } catch (const DegenerateInterpretationError& e) {
                std::printf("panel skipped: %s\n", e.what());
            }
        }
    });
    const Tensor& delta = result->perturbation.delta();
    const double norm =
        cfg.budget.norm == NormKind::l2 ? l2_norm(delta) : linf_norm(delta);
    std::printf("perturbation norm %.6f (budget %.6f), %zu epochs\n", norm,
                cfg.budget.epsilon, result->epoch_objective.size());
    if (!result->epoch_objective.empty()) {
        std::printf("final epoch objective %.8g\n", result->epoch_objective.back());
    }
    std::printf("wrote %s\n", (out / "perturbation.json").string().c_str());
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg) {
    ensure_out_dir(cfg.output_dir);
    const fs::path out(cfg.output_dir);
    std::optional<Network> net;
    stage("eval", [&] {
        const fs::path model_path = out / "model.upnc";
        if (!fs::exists(model_path)) {
            throw IoError("model checkpoint not found: " + model_path.string() +
                          " (run the train subcommand first)");
        }
        net = load_network(model_path);
    });
    Dataset test;
    stage("dataset", [&] { test = load_configured_dataset(cfg, true); });

    std::optional<Perturbation> universal;
    if (stored_perturbation_algorithm(cfg.attack.algorithm)) {
        stage("eval", [&] {
            const fs::path pp = out / "perturbation.json";
            if (!fs::exists(pp)) {
                throw IoError("perturbation not found: " + pp.string() +
                              " (run the attack subcommand first)");
            }
            universal = load_perturbation(pp.string()).perturbation;
        });
    }

    stage("eval", [&] {
        EvalOptions opts = cfg.eval;
        opts.seed = stage_seed(cfg, "eval");
        const EvalAttack ea = configured_eval_attack(cfg, universal);
        const DissimilarityReport rep =
            mean_dissimilarity_report(*net, cfg.interpretation, test, ea, opts);
        write_text_file((out / "dissimilarity.csv").string(), to_csv(rep));
        std::printf("%s\n", ea.describe().c_str());
        std::printf("mean normalized dissimilarity %.6f over %zu samples (%zu skipped)\n",
                    rep.mean, rep.count, rep.skipped_degenerate);
        for (std::size_t r = 0; r < rep.repeat_means.size(); ++r) {
            std::printf("  repeat %zu mean %.6f\n", r, rep.repeat_means[r]);
        }

        std::optional<FoolingReport> fooling;
        if (universal) {
            fooling = fooling_rate(*net, test, *universal, opts.clamp_pixels);
        } else if (cfg.attack.algorithm == AttackChoice::Algorithm::random_universal) {
            std::vector<Perturbation> draws;
            FoolingReport pooled;
            for (std::size_t r = 0; r < opts.repeats; ++r) {
                Perturbation d = random_universal_perturbation(
                    cfg.budget, net->input_shape(), Rng::derive(opts.seed, r));
                const FoolingReport f = fooling_rate(*net, test, d, opts.clamp_pixels);
                std::printf("  repeat %zu fooling %.4f\n", r, f.fraction);
                pooled.fooled += f.fooled;
                pooled.count += f.count;
                draws.push_back(std::move(d));
            }
            pooled.fraction =
                static_cast<double>(pooled.fooled) / static_cast<double>(pooled.count);
            fooling = pooled;
            if (draws.size() >= 2) {
                std::vector<std::string> labels;
                for (std::size_t r = 0; r < draws.size(); ++r) {
                    labels.push_back("draw_" + std::to_string(r));
                }
                write_text_file((out / "correlations.csv").string(),
                                to_csv(cross_correlation_matrix(draws, labels)));
            }
        }
        if (fooling) {
            write_text_file((out / "fooling.csv").string(), to_csv(*fooling));
            std::printf("fooling rate %.4f (%zu/%zu)\n", fooling->fraction,
                        fooling->fooled, fooling->count);
        }
    });
    std::printf("wrote %s\n", (out / "dissimilarity.csv").string().c_str());
    return 0;
}

int cmd_run(const ExperimentConfig& cfg) {
    const RunReport rep = run_experiment(cfg);
    std::printf("train accuracy %.4f, test accuracy %.4f\n", rep.train_accuracy,
                rep.test_accuracy);
    if (rep.attack_trace && !rep.attack_trace->empty()) {
        std::printf("attack objective %.8g after %zu epochs (%zu degenerate skips)\n",
                    rep.attack_trace->back(), rep.attack_trace->size(),
                    rep.attack_skipped);
    }
    if (rep.dissimilarity) {
        std::printf("mean normalized dissimilarity %.6f over %zu samples (%zu skipped)\n",
                    rep.dissimilarity->mean, rep.dissimilarity->count,
                    rep.dissimilarity->skipped_degenerate);
    }
    if (rep.fooling) {
        std::printf("fooling rate %.4f (%zu/%zu)\n", rep.fooling->fraction,
                    rep.fooling->fooled, rep.fooling->count);
    }
    std::printf("artifacts in %s\n", cfg.output_dir.c_str());
    return 0;
}

int cmd_verify(std::uint64_t seed, const std::string& out_dir) {
    ensure_out_dir(out_dir);
    std::string text;
    bool ok = true;
    const auto record = [&](const std::string& name, bool pass, const std::string& block) {
        std::printf("[%s] %s\n", pass ? "PASS" : "FAIL", name.c_str());
        text += "== " + name + " ==\n" + block + "\n";
        ok = ok && pass;
    };

    // Gaussian integration by parts on a linear score: both sides equal the
    // weight vector in expectation.
    {
        const DifferentiableScalar f(
            Shape{5}, []<typename T>(ad::Tape<T>&, std::span<const ad::Var<T>> x) {
                ad::Var<T> acc = x[0] * 0.4;
                for (std::size_t i = 1; i < x.size(); ++i) {
                    acc = acc + x[i] * (0.4 + 0.3 * static_cast<double>(i));
                }
                return acc;
            });
        Tensor x(Shape{5});
        for (std::size_t i = 0; i < 5; ++i) x.data()[i] = 0.3 * static_cast<double>(i) - 0.5;
        const SteinCheckReport r = stein_lemma_check(f, x, 1.0, 100000, Rng::derive(seed, 1));
        record("stein identity, linear field", r.gap <= 0.05, to_text(r));
    }

    // Same identity on f(x) = ||x||^2 / 2, where both sides equal x.
    {
        const DifferentiableScalar f(
            Shape{5}, []<typename T>(ad::Tape<T>&, std::span<const ad::Var<T>> x) {
                ad::Var<T> acc = x[0] * x[0];
                for (std::size_t i = 1; i < x.size(); ++i) acc = acc + x[i] * x[i];
                return acc * 0.5;
            });
        Tensor x(Shape{5});
        for (std::size_t i = 0; i < 5; ++i) x.data()[i] = 0.3 * static_cast<double>(i) - 0.5;
        const SteinCheckReport r = stein_lemma_check(f, x, 1.0, 100000, Rng::derive(seed, 2));
        record("stein identity, quadratic field", r.gap <= 0.05, to_text(r));
    }

    // Curvature sandwich around the minimum of a centered quadratic.
    {
        ScalarField field;
        field.shape = Shape{2};
        field.value = [](const Tensor& z) {
            const auto d = z.data();
            return d[0] * d[0] + 2.0 * d[1] * d[1];
        };
        field.gradient = [](const Tensor& z) {
            Tensor g(z.shape());
            g.data()[0] = 2.0 * z.data()[0];
            g.data()[1] = 4.0 * z.data()[1];
            return g;
        };
        const Tensor x(Shape{2});
        Tensor step(Shape{2});
        step.data()[0] = 0.06;
        step.data()[1] = 0.08;
        SandwichCheckConfig sc;
        sc.lambda = 6.0;
        sc.sigma = 0.01;
        sc.epsilon = 0.1;
        sc.mc_samples = 4000;
        sc.seed = Rng::derive(seed, 3);
        const SandwichCheckReport r = prop1_sandwich_check(field, x, step, sc);
        record("curvature sandwich, quadratic field", r.holds && !r.hypothesis_violated,
               to_text(r));
    }

    // Pairwise Lipschitz probe on a linear field: never exceeds the weight
    // norm, and with 64 probes lands well above half of it.
    {
        Tensor w(Shape{5});
        for (std::size_t i = 0; i < 5; ++i) w.data()[i] = 0.8 - 0.3 * static_cast<double>(i);
        ScalarField lin;
        lin.shape = w.shape();
        lin.value = [w](const Tensor& z) { return dot(w, z); };
        lin.gradient = [w](const Tensor&) { return w; };
        const Tensor center(Shape{5});
        const double est = lipschitz_estimate_core(lin, center, 1.0, 64, Rng::derive(seed, 4));
        const double wn = l2_norm(w);
        const std::string block = "probes: 64\nestimate: " + format_g17(est) +
                                  "\nweight_norm: " + format_g17(wn) + "\n";
        record("lipschitz probe, linear field",
               est > 0.5 * wn && est <= wn * (1.0 + 1e-9), block);
    }

    const fs::path report = fs::path(out_dir) / "verify.txt";
    write_text_file(report.string(), text);
    std::printf("wrote %s\n", report.string().c_str());
    if (!ok) std::fprintf(stderr, "[verify] one or more checks failed\n");
    return ok ? 0 : 1;
}

int cmd_export(const std::vector<std::string>& files, const std::string& out_dir) {
    if (files.empty()) throw StageError("export", "no perturbation files given");
    ensure_out_dir(out_dir);
    const fs::path out(out_dir);
    std::vector<Perturbation> deltas;
    std::vector<std::string> labels;
    stage("export", [&] {
        for (const std::string& f : files) {
            PerturbationArtifact art = load_perturbation(f);
            const std::string stem = fs::path(f).stem().string();
            const fs::path img = out / (stem + ".pgm");
            export_perturbation_image(art.perturbation, img.string());
            std::printf("wrote %s (algorithm %s, seed %llu)\n", img.string().c_str(),
                        art.algorithm.c_str(),
                        static_cast<unsigned long long>(art.seed));
            labels.push_back(stem);
            deltas.push_back(std::move(art.perturbation));
        }
        if (deltas.size() >= 2) {
            write_text_file((out / "correlations.csv").string(),
                            to_csv(cross_correlation_matrix(deltas, labels)));
            std::printf("wrote %s\n", (out / "correlations.csv").string().c_str());
        }
    });
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"universal perturbations for interpretation, desk scale"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool deterministic = false;
    std::vector<std::string> export_files;

    const auto add_common = [&](CLI::App* cmd, bool needs_config) {
        if (needs_config) {
            cmd->add_option("--config", config_path, "experiment config, json")
                ->required()
                ->check(CLI::ExistingFile);
        }
        cmd->add_option("--seed", seed, "override the config seed");
        cmd->add_option("--out", out_dir, "override the output directory");
        // Everything is single threaded already; the flag is accepted so
        // scripts can ask for it uniformly.
        cmd->add_flag("--deterministic", deterministic, "force single-threaded execution");
        return cmd;
    };

    CLI::App* train_cmd = add_common(
        app.add_subcommand("train", "train the configured model, write model.upnc"), true);
    CLI::App* attack_cmd = add_common(
        app.add_subcommand("attack", "craft the configured universal perturbation"), true);
    CLI::App* eval_cmd = add_common(
        app.add_subcommand("eval", "evaluate the configured attack on the test split"), true);
    CLI::App* run_cmd = add_common(
        app.add_subcommand("run", "full pipeline: dataset, train, attack, eval, report"),
        true);
    CLI::App* verify_cmd = add_common(
        app.add_subcommand("verify", "numerical checks behind the method"), false);
    CLI::App* export_cmd = add_common(
        app.add_subcommand("export", "render stored perturbations to grayscale images"),
        false);
    export_cmd->add_option("files", export_files, "perturbation json files")
        ->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        const auto configured = [&](CLI::App* cmd) {
            ExperimentConfig cfg;
            stage("config", [&] { cfg = load_config(config_path); });
            if (cmd->count("--seed") > 0) cfg.seed = seed;
            if (cmd->count("--out") > 0) cfg.output_dir = out_dir;
            if (const auto note = cfg.attack.base.validate(cfg.budget.epsilon)) {
                std::fprintf(stderr, "advisory: %s\n", note->c_str());
            }
            return cfg;
        };
        if (*train_cmd) return cmd_train(configured(train_cmd));
        if (*attack_cmd) return cmd_attack(configured(attack_cmd));
        if (*eval_cmd) return cmd_eval(configured(eval_cmd));
        if (*run_cmd) return cmd_run(configured(run_cmd));
        if (*verify_cmd) {
            return cmd_verify(seed, verify_cmd->count("--out") > 0 ? out_dir : "out");
        }
        if (*export_cmd) {
            return cmd_export(export_files,
                              export_cmd->count("--out") > 0 ? out_dir : "out");
        }
    } catch (const StageError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "[cli] %s\n", e.what());
        return 1;
    }
    return 0;
}
