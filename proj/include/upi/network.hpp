#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "upi/autodiff.hpp"
#include "upi/tensor.hpp"

namespace upi {

enum class ActivationKind { relu, softplus };

struct Activation {
    ActivationKind kind = ActivationKind::relu;
    // Softplus sharpness; the pointwise gap to relu is at most ln(2)/beta.
    double beta = 20.0;
};

struct LayerSpec {
    enum class Kind { dense, conv2d, activation, flatten, avgpool };
    Kind kind = Kind::dense;
    std::size_t units = 0;                      // dense
    std::size_t channels = 0;                   // conv2d
    std::size_t kernel = 0;                     // conv2d, square window
    std::size_t stride = 1;                     // conv2d
    std::size_t window = 0;                     // avgpool, stride == window

    static LayerSpec dense(std::size_t units);
    static LayerSpec conv2d(std::size_t channels, std::size_t kernel, std::size_t stride = 1);
    static LayerSpec activation();
    static LayerSpec flatten();
    static LayerSpec avgpool(std::size_t window);
};

// Feed-forward classifier: layers applied in order, scores out of the last
// layer. Parameters live in one flat tensor; per-layer offsets are fixed at
// construction (weights first, then bias, layer by layer).
class Network {
public:
    Network(Shape input_shape, std::vector<LayerSpec> layers, Activation activation,
            std::uint64_t init_seed);

    const Shape& input_shape() const { return input_shape_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    const Activation& activation() const { return activation_; }
    void set_activation(const Activation& a) { activation_ = a; }
    std::size_t class_count() const { return output_shapes_.back().count(); }

    const Tensor& flat_parameters() const { return params_; }
    void set_flat_parameters(const Tensor& params);
    std::size_t parameter_count() const { return params_.size(); }

    // Output shape after each layer, same length as layers().
    const std::vector<Shape>& output_shapes() const { return output_shapes_; }
    // Flat offset of each layer's parameter block; npos-like for layers
    // without parameters. Weights at offset, bias at offset + weight_count.
    struct ParamBlock {
        std::size_t offset = 0;
        std::size_t weights = 0;
        std::size_t biases = 0;
        bool present = false;
    };
    const std::vector<ParamBlock>& param_blocks() const { return blocks_; }

    Tensor scores(const Tensor& x) const;
    std::size_t predict(const Tensor& x) const;

private:
    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    Activation activation_;
    Tensor params_;
    std::vector<Shape> output_shapes_;
    std::vector<ParamBlock> blocks_;
};

Tensor forward_scores(const Network& net, const Tensor& x);

// Argmax over scores; ties resolve to the lowest index.
std::size_t predicted_label(const Network& net, const Tensor& x);

// Copy with the activation swapped to softplus(beta). Attack-time
// differentiation runs on the surrogate; predictions may keep relu.
Network smooth_surrogate(const Network& net, double beta);

// x -> S_label(x) with parameters held constant. The result references `net`;
// it must not outlive it.
DifferentiableScalar score_function(const Network& net, std::size_t label);

// x -> cross_entropy(scores(x), label), parameters constant. Same lifetime
// rule as score_function.
DifferentiableScalar input_loss_function(const Network& net, std::size_t label);

// params -> cross_entropy(scores_params(x), label) for one sample; the
// argument tensor is the flat parameter vector. References `net` and `x`.
DifferentiableScalar parameter_loss_function(const Network& net, const Tensor& x,
                                             std::size_t label);

double cross_entropy_value(const Tensor& scores, std::size_t label);

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

// Stock architectures used by the experiments.
Network make_fcn(Shape input_shape, std::size_t hidden, std::size_t classes,
                 Activation activation, std::uint64_t init_seed);
Network make_cnn(Shape input_shape, std::size_t channels, std::size_t kernel,
                 std::size_t pool_window, std::size_t classes, Activation activation,
                 std::uint64_t init_seed);
Network make_linear(Shape input_shape, std::size_t classes, Activation activation,
                    std::uint64_t init_seed);

}  // namespace upi
