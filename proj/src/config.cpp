#include "upi/config.hpp"

#include <filesystem>

#include "json.hpp"
#include "upi/serialize.hpp"

namespace upi {

namespace {

using nlohmann::json;

std::string to_string(DatasetConfig::Kind k) {
    return k == DatasetConfig::Kind::idx ? "idx" : "synthetic";
}

DatasetConfig::Kind dataset_kind_from_string(const std::string& s) {
    if (s == "idx") return DatasetConfig::Kind::idx;
    if (s == "synthetic") return DatasetConfig::Kind::synthetic;
    throw ValueError("config: unknown dataset kind '" + s + "'");
}

std::string to_string(ModelConfig::Kind k) {
    switch (k) {
        case ModelConfig::Kind::linear: return "linear";
        case ModelConfig::Kind::fcn: return "fcn";
        case ModelConfig::Kind::cnn: return "cnn";
    }
    return "fcn";
}

ModelConfig::Kind model_kind_from_string(const std::string& s) {
    if (s == "linear") return ModelConfig::Kind::linear;
    if (s == "fcn") return ModelConfig::Kind::fcn;
    if (s == "cnn") return ModelConfig::Kind::cnn;
    throw ValueError("config: unknown model kind '" + s + "'");
}

std::string to_string(ActivationKind k) {
    return k == ActivationKind::relu ? "relu" : "softplus";
}

ActivationKind activation_from_string(const std::string& s) {
    if (s == "relu") return ActivationKind::relu;
    if (s == "softplus") return ActivationKind::softplus;
    throw ValueError("config: unknown activation '" + s + "'");
}

}  // namespace

std::string to_string(AttackChoice::Algorithm algorithm) {
    switch (algorithm) {
        case AttackChoice::Algorithm::upi_grad: return "upi_grad";
        case AttackChoice::Algorithm::upi_pca_fgm: return "upi_pca_fgm";
        case AttackChoice::Algorithm::upi_pca_pgd: return "upi_pca_pgd";
        case AttackChoice::Algorithm::per_image_fgm: return "per_image_fgm";
        case AttackChoice::Algorithm::per_image_pgd: return "per_image_pgd";
        case AttackChoice::Algorithm::random_universal: return "random_universal";
        case AttackChoice::Algorithm::random_per_image: return "random_per_image";
        case AttackChoice::Algorithm::uap_classification: return "uap_classification";
    }
    return "upi_grad";
}

AttackChoice::Algorithm algorithm_from_string(const std::string& name) {
    if (name == "upi_grad") return AttackChoice::Algorithm::upi_grad;
    if (name == "upi_pca_fgm") return AttackChoice::Algorithm::upi_pca_fgm;
    if (name == "upi_pca_pgd") return AttackChoice::Algorithm::upi_pca_pgd;
    if (name == "per_image_fgm") return AttackChoice::Algorithm::per_image_fgm;
    if (name == "per_image_pgd") return AttackChoice::Algorithm::per_image_pgd;
    if (name == "random_universal") return AttackChoice::Algorithm::random_universal;
    if (name == "random_per_image") return AttackChoice::Algorithm::random_per_image;
    if (name == "uap_classification") return AttackChoice::Algorithm::uap_classification;
    throw ValueError("config: unknown attack algorithm '" + name + "'");
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.output_dir.empty()) throw ValueError("config: empty output directory");
    cfg.budget.validate();
    (void)cfg.attack.base.validate(cfg.budget.epsilon);
    if (cfg.attack.pgd.iterations == 0) {
        throw ValueError("config: pgd iterations must be >= 1");
    }
    if (!(cfg.attack.pgd.stepsize > 0.0)) {
        throw ValueError("config: pgd stepsize must be > 0");
    }
    if (cfg.model.train.batch_size == 0) {
        throw ValueError("config: training batch size must be >= 1");
    }
    if (!(cfg.model.train.learning_rate > 0.0)) {
        throw ValueError("config: learning rate must be > 0");
    }
    if (cfg.model.kind == ModelConfig::Kind::fcn && cfg.model.hidden == 0) {
        throw ValueError("config: fcn hidden width must be >= 1");
    }
    if (cfg.model.kind == ModelConfig::Kind::cnn &&
        (cfg.model.channels == 0 || cfg.model.kernel == 0 || cfg.model.pool == 0)) {
        throw ValueError("config: cnn channels, kernel, and pool must be >= 1");
    }
    if (cfg.model.activation.kind == ActivationKind::softplus &&
        !(cfg.model.activation.beta > 0.0)) {
        throw ValueError("config: softplus beta must be > 0");
    }
    if (cfg.interpretation.method == InterpretationMethod::integrated_gradients &&
        cfg.interpretation.ig.steps == 0) {
        throw ValueError("config: integrated-gradients steps must be >= 1");
    }
    if (cfg.eval.repeats == 0) throw ValueError("config: eval repeats must be >= 1");

    if (cfg.dataset.kind == DatasetConfig::Kind::synthetic) {
        if (cfg.dataset.classes < 2) throw ValueError("config: synthetic needs >= 2 classes");
        if (cfg.dataset.samples < cfg.dataset.classes ||
            cfg.dataset.test_samples < cfg.dataset.classes) {
            throw ValueError("config: synthetic sample counts must cover every class");
        }
        if (!(cfg.dataset.spread > 0.0)) throw ValueError("config: spread must be > 0");
    } else {
        if (cfg.dataset.images.empty() || cfg.dataset.labels.empty() ||
            cfg.dataset.test_images.empty() || cfg.dataset.test_labels.empty()) {
            throw ValueError("config: idx dataset needs all four file paths");
        }
    }
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir;
    j["dataset"] = {
        {"kind", to_string(cfg.dataset.kind)},
        {"images", cfg.dataset.images},
        {"labels", cfg.dataset.labels},
        {"test_images", cfg.dataset.test_images},
        {"test_labels", cfg.dataset.test_labels},
        {"train_count", cfg.dataset.train_count},
        {"test_count", cfg.dataset.test_count},
        {"samples", cfg.dataset.samples},
        {"features", cfg.dataset.features},
        {"classes", cfg.dataset.classes},
        {"test_samples", cfg.dataset.test_samples},
        {"spread", cfg.dataset.spread},
    };
    j["model"] = {
        {"kind", to_string(cfg.model.kind)},
        {"hidden", cfg.model.hidden},
        {"channels", cfg.model.channels},
        {"kernel", cfg.model.kernel},
        {"pool", cfg.model.pool},
        {"activation", to_string(cfg.model.activation.kind)},
        {"beta", cfg.model.activation.beta},
        {"train",
         {{"epochs", cfg.model.train.epochs},
          {"batch_size", cfg.model.train.batch_size},
          {"learning_rate", cfg.model.train.learning_rate}}},
    };
    j["interpretation"] = {
        {"method", to_string(cfg.interpretation.method)},
        {"ig_steps", cfg.interpretation.ig.steps},
    };
    j["budget"] = {
        {"epsilon", cfg.budget.epsilon},
        {"norm", to_string(cfg.budget.norm)},
    };
    j["attack"] = {
        {"algorithm", to_string(cfg.attack.algorithm)},
        {"stepsize", cfg.attack.base.stepsize},
        {"sigma", cfg.attack.base.noise_sigma},
        {"epochs", cfg.attack.base.epochs},
        {"batch_size", cfg.attack.base.batch_size},
        {"noise_per_sample", cfg.attack.base.noise_per_sample},
        {"draws_per_step", cfg.attack.base.draws_per_step},
        {"trace_samples", cfg.attack.base.trace_samples},
        {"pgd_iterations", cfg.attack.pgd.iterations},
        {"pgd_stepsize", cfg.attack.pgd.stepsize},
    };
    j["eval"] = {
        {"repeats", cfg.eval.repeats},
        {"clamp_pixels", cfg.eval.clamp_pixels},
        {"freeze_labels", cfg.eval.freeze_labels},
    };
    return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    ExperimentConfig cfg;
    try {
        cfg.seed = j.value("seed", std::uint64_t{0});
        cfg.output_dir = j.value("output_dir", std::string("out"));
        if (j.contains("dataset")) {
            const json& d = j["dataset"];
            cfg.dataset.kind = dataset_kind_from_string(
                d.value("kind", to_string(cfg.dataset.kind)));
            cfg.dataset.images = d.value("images", cfg.dataset.images);
            cfg.dataset.labels = d.value("labels", cfg.dataset.labels);
            cfg.dataset.test_images = d.value("test_images", cfg.dataset.test_images);
            cfg.dataset.test_labels = d.value("test_labels", cfg.dataset.test_labels);
            cfg.dataset.train_count = d.value("train_count", cfg.dataset.train_count);
            cfg.dataset.test_count = d.value("test_count", cfg.dataset.test_count);
            cfg.dataset.samples = d.value("samples", cfg.dataset.samples);
            cfg.dataset.features = d.value("features", cfg.dataset.features);
            cfg.dataset.classes = d.value("classes", cfg.dataset.classes);
            cfg.dataset.test_samples = d.value("test_samples", cfg.dataset.test_samples);
            cfg.dataset.spread = d.value("spread", cfg.dataset.spread);
        }
        if (j.contains("model")) {
            const json& m = j["model"];
            cfg.model.kind = model_kind_from_string(m.value("kind", to_string(cfg.model.kind)));
            cfg.model.hidden = m.value("hidden", cfg.model.hidden);
            cfg.model.channels = m.value("channels", cfg.model.channels);
            cfg.model.kernel = m.value("kernel", cfg.model.kernel);
            cfg.model.pool = m.value("pool", cfg.model.pool);
            cfg.model.activation.kind = activation_from_string(
                m.value("activation", to_string(cfg.model.activation.kind)));
            cfg.model.activation.beta = m.value("beta", cfg.model.activation.beta);
            if (m.contains("train")) {
                const json& t = m["train"];
                cfg.model.train.epochs = t.value("epochs", cfg.model.train.epochs);
                cfg.model.train.batch_size = t.value("batch_size", cfg.model.train.batch_size);
                cfg.model.train.learning_rate =
                    t.value("learning_rate", cfg.model.train.learning_rate);
            }
        }
        if (j.contains("interpretation")) {
            const json& i = j["interpretation"];
            cfg.interpretation.method = interpretation_method_from_string(
                i.value("method", to_string(cfg.interpretation.method)));
            cfg.interpretation.ig.steps = i.value("ig_steps", cfg.interpretation.ig.steps);
        }
        if (j.contains("budget")) {
            const json& b = j["budget"];
            cfg.budget.epsilon = b.value("epsilon", cfg.budget.epsilon);
            cfg.budget.norm = norm_kind_from_string(b.value("norm", to_string(cfg.budget.norm)));
        }
        if (j.contains("attack")) {
            const json& a = j["attack"];
            cfg.attack.algorithm =
                algorithm_from_string(a.value("algorithm", to_string(cfg.attack.algorithm)));
            cfg.attack.base.stepsize = a.value("stepsize", cfg.attack.base.stepsize);
            cfg.attack.base.noise_sigma = a.value("sigma", cfg.attack.base.noise_sigma);
            cfg.attack.base.epochs = a.value("epochs", cfg.attack.base.epochs);
            cfg.attack.base.batch_size = a.value("batch_size", cfg.attack.base.batch_size);
            cfg.attack.base.noise_per_sample =
                a.value("noise_per_sample", cfg.attack.base.noise_per_sample);
            cfg.attack.base.draws_per_step =
                a.value("draws_per_step", cfg.attack.base.draws_per_step);
            cfg.attack.base.trace_samples =
                a.value("trace_samples", cfg.attack.base.trace_samples);
            cfg.attack.pgd.iterations = a.value("pgd_iterations", cfg.attack.pgd.iterations);
            cfg.attack.pgd.stepsize = a.value("pgd_stepsize", cfg.attack.pgd.stepsize);
        }
        if (j.contains("eval")) {
            const json& e = j["eval"];
            cfg.eval.repeats = e.value("repeats", cfg.eval.repeats);
            cfg.eval.clamp_pixels = e.value("clamp_pixels", cfg.eval.clamp_pixels);
            cfg.eval.freeze_labels = e.value("freeze_labels", cfg.eval.freeze_labels);
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    ExperimentConfig cfg = config_from_json(read_text_file(path));
    if (cfg.dataset.kind == DatasetConfig::Kind::idx) {
        const std::filesystem::path base = std::filesystem::path(path).parent_path();
        const auto resolve = [&base](std::string& p) {
            std::filesystem::path fp(p);
            if (fp.is_relative()) fp = base / fp;
            if (!std::filesystem::exists(fp)) {
                throw IoError("config: referenced file not found: " + fp.string());
            }
            p = fp.string();
        };
        resolve(cfg.dataset.images);
        resolve(cfg.dataset.labels);
        resolve(cfg.dataset.test_images);
        resolve(cfg.dataset.test_labels);
    }
    return cfg;
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
    write_text_file(path, config_to_json(cfg));
}

}  // namespace upi
