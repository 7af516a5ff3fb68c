#pragma once

#include <cstdint>
#include <string>

#include "upi/attack.hpp"
#include "upi/data.hpp"
#include "upi/eval.hpp"
#include "upi/interpret.hpp"
#include "upi/network.hpp"
#include "upi/train.hpp"

namespace upi {

struct DatasetConfig {
    enum class Kind { synthetic, idx };
    Kind kind = Kind::synthetic;

    // idx: file paths, resolved against the config file's directory at load.
    std::string images;
    std::string labels;
    std::string test_images;
    std::string test_labels;
    // Stratified subset sizes; 0 keeps everything.
    std::size_t train_count = 2000;
    std::size_t test_count = 500;

    // synthetic blobs
    std::size_t samples = 256;
    std::size_t features = 16;
    std::size_t classes = 4;
    std::size_t test_samples = 64;
    double spread = 0.05;
};

struct ModelConfig {
    enum class Kind { linear, fcn, cnn };
    Kind kind = Kind::fcn;
    std::size_t hidden = 256;    // fcn
    std::size_t channels = 8;    // cnn
    std::size_t kernel = 3;      // cnn
    std::size_t pool = 2;        // cnn
    Activation activation{ActivationKind::softplus, 20.0};
    TrainConfig train;
};

struct AttackChoice {
    enum class Algorithm {
        upi_grad,
        upi_pca_fgm,
        upi_pca_pgd,
        per_image_fgm,
        per_image_pgd,
        random_universal,
        random_per_image,
        uap_classification,
    };
    Algorithm algorithm = Algorithm::upi_grad;
    UpiGradConfig base;  // stepsize, sigma, epochs, batch size, noise options
    PgdConfig pgd;
};

std::string to_string(AttackChoice::Algorithm algorithm);
AttackChoice::Algorithm algorithm_from_string(const std::string& name);

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    DatasetConfig dataset;
    ModelConfig model;
    Interpreter interpretation;
    PerturbationBudget budget;
    AttackChoice attack;
    EvalOptions eval;
};

// JSON round-trip; from-json validates every numeric invariant but does not
// touch the filesystem.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);

// Reads, parses, validates, and resolves dataset paths against the config
// file's directory; missing referenced files are a load error.
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// Numeric and structural checks shared by from-json and the pipeline.
void validate_config(const ExperimentConfig& cfg);

}  // namespace upi
