#include "upi/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "upi/rng.hpp"

namespace upi {

LayerSpec LayerSpec::dense(std::size_t units) {
    LayerSpec s;
    s.kind = Kind::dense;
    s.units = units;
    return s;
}
LayerSpec LayerSpec::conv2d(std::size_t channels, std::size_t kernel, std::size_t stride) {
    LayerSpec s;
    s.kind = Kind::conv2d;
    s.channels = channels;
    s.kernel = kernel;
    s.stride = stride;
    return s;
}
LayerSpec LayerSpec::activation() {
    LayerSpec s;
    s.kind = Kind::activation;
    return s;
}
LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = Kind::flatten;
    return s;
}
LayerSpec LayerSpec::avgpool(std::size_t window) {
    LayerSpec s;
    s.kind = Kind::avgpool;
    s.window = window;
    return s;
}

namespace {

// (channels, height, width) view of a rank-2 or rank-3 shape.
void chw_of(const Shape& s, const char* context, std::size_t& c, std::size_t& h,
            std::size_t& w) {
    if (s.rank() == 2) {
        c = 1;
        h = s[0];
        w = s[1];
    } else if (s.rank() == 3) {
        c = s[0];
        h = s[1];
        w = s[2];
    } else {
        throw ShapeError(std::string(context) + ": needs a rank-2 or rank-3 input, got " +
                         s.str());
    }
}

}  // namespace

Network::Network(Shape input_shape, std::vector<LayerSpec> layers, Activation activation,
                 std::uint64_t init_seed)
    : input_shape_(std::move(input_shape)),
      layers_(std::move(layers)),
      activation_(activation) {
    if (layers_.empty()) throw ValueError("network: no layers");
    if (input_shape_.rank() == 0) throw ShapeError("network: empty input shape");
    if (!(activation_.beta > 0.0)) throw ValueError("network: beta must be > 0");

    Shape cur = input_shape_;
    std::size_t total = 0;
    for (const LayerSpec& ls : layers_) {
        ParamBlock pb;
        switch (ls.kind) {
            case LayerSpec::Kind::dense: {
                if (cur.rank() != 1) {
                    throw ShapeError("dense layer needs a rank-1 input, got " + cur.str() +
                                     " (add flatten first)");
                }
                if (ls.units == 0) throw ValueError("dense layer: zero units");
                pb.present = true;
                pb.offset = total;
                pb.weights = ls.units * cur.count();
                pb.biases = ls.units;
                cur = Shape{ls.units};
                break;
            }
            case LayerSpec::Kind::conv2d: {
                std::size_t c, h, w;
                chw_of(cur, "conv2d", c, h, w);
                if (ls.channels == 0 || ls.kernel == 0 || ls.stride == 0) {
                    throw ValueError("conv2d layer: zero channels, kernel, or stride");
                }
                if (h < ls.kernel || w < ls.kernel) {
                    throw ShapeError("conv2d kernel " + std::to_string(ls.kernel) +
                                     " exceeds input " + cur.str());
                }
                pb.present = true;
                pb.offset = total;
                pb.weights = ls.channels * c * ls.kernel * ls.kernel;
                pb.biases = ls.channels;
                cur = Shape{ls.channels, (h - ls.kernel) / ls.stride + 1,
                            (w - ls.kernel) / ls.stride + 1};
                break;
            }
            case LayerSpec::Kind::activation:
                break;
            case LayerSpec::Kind::flatten:
                cur = Shape{cur.count()};
                break;
            case LayerSpec::Kind::avgpool: {
                std::size_t c, h, w;
                chw_of(cur, "avgpool", c, h, w);
                if (ls.window == 0) throw ValueError("avgpool layer: zero window");
                if (h < ls.window || w < ls.window) {
                    throw ShapeError("avgpool window exceeds input " + cur.str());
                }
                cur = Shape{c, h / ls.window, w / ls.window};
                break;
            }
        }
        total += pb.weights + pb.biases;
        blocks_.push_back(pb);
        output_shapes_.push_back(cur);
    }
    if (cur.rank() != 1 || cur.count() < 2) {
        throw ShapeError("network must end in at least two scores, got " + cur.str());
    }

    // Seeded uniform +-1/sqrt(fan-in) per parameterized layer, weights then
    // bias, in layer order. The stream layout is part of the checkpoint story.
    params_ = Tensor(Shape{total});
    Rng rng(init_seed);
    Shape walk = input_shape_;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const LayerSpec& ls = layers_[li];
        const ParamBlock& pb = blocks_[li];
        if (pb.present) {
            std::size_t fan_in = 0;
            if (ls.kind == LayerSpec::Kind::dense) {
                fan_in = walk.count();
            } else {
                std::size_t c, h, w;
                chw_of(walk, "conv2d", c, h, w);
                fan_in = c * ls.kernel * ls.kernel;
            }
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t i = 0; i < pb.weights + pb.biases; ++i) {
                params_[pb.offset + i] = bound * (2.0 * rng.uniform() - 1.0);
            }
        }
        walk = output_shapes_[li];
    }
}

void Network::set_flat_parameters(const Tensor& params) {
    if (params.shape() != params_.shape()) {
        throw ShapeError("set_flat_parameters: expected " + params_.shape().str() +
                         ", got " + params.shape().str());
    }
    check_finite(params, "set_flat_parameters");
    params_ = params;
}

namespace {

// One generic forward pass usable four ways: plain evaluation (nothing
// active), input gradients (input vars active), parameter gradients (param
// vars active), and each of those in Dual arithmetic. kParamsActive selects
// which span carries tape-bound variables so the hot loop stays branch-free.
template <typename T, bool kParamsActive>
std::vector<ad::Var<T>> forward_walk(const Network& net, ad::Tape<T>& tape,
                                     std::span<const ad::Var<T>> input,
                                     std::span<const ad::Var<T>> param_vars) {
    if (input.size() != net.input_shape().count()) {
        throw ShapeError("forward: input size mismatch");
    }
    const std::span<const double> flat = net.flat_parameters().data();
    std::vector<ad::Var<T>> cur(input.begin(), input.end());
    std::vector<ad::Var<T>> next;
    Shape cur_shape = net.input_shape();

    for (std::size_t li = 0; li < net.layers().size(); ++li) {
        const LayerSpec& ls = net.layers()[li];
        const Network::ParamBlock& pb = net.param_blocks()[li];
        switch (ls.kind) {
            case LayerSpec::Kind::dense: {
                const std::size_t in_n = cur.size();
                next.clear();
                next.reserve(ls.units);
                for (std::size_t j = 0; j < ls.units; ++j) {
                    ad::NodeBuilder<T> nb(tape);
                    const std::size_t woff = pb.offset + j * in_n;
                    const std::size_t boff = pb.offset + pb.weights + j;
                    if constexpr (kParamsActive) {
                        nb.term(param_vars[boff], T(1.0));
                        for (std::size_t k = 0; k < in_n; ++k) {
                            nb.product(param_vars[woff + k], cur[k]);
                        }
                    } else {
                        nb.constant(T(flat[boff]));
                        for (std::size_t k = 0; k < in_n; ++k) {
                            nb.term_scaled(cur[k], flat[woff + k]);
                        }
                    }
                    next.push_back(nb.build());
                }
                cur.swap(next);
                break;
            }
            case LayerSpec::Kind::conv2d: {
                std::size_t ic, ih, iw;
                chw_of(cur_shape, "conv2d", ic, ih, iw);
                const std::size_t k = ls.kernel, st = ls.stride;
                const std::size_t oh = (ih - k) / st + 1, ow = (iw - k) / st + 1;
                next.clear();
                next.reserve(ls.channels * oh * ow);
                for (std::size_t oc = 0; oc < ls.channels; ++oc) {
                    const std::size_t koff = pb.offset + oc * ic * k * k;
                    const std::size_t boff = pb.offset + pb.weights + oc;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            ad::NodeBuilder<T> nb(tape);
                            if constexpr (kParamsActive) {
                                nb.term(param_vars[boff], T(1.0));
                            } else {
                                nb.constant(T(flat[boff]));
                            }
                            for (std::size_t c = 0; c < ic; ++c) {
                                for (std::size_t ky = 0; ky < k; ++ky) {
                                    const std::size_t irow =
                                        (c * ih + oy * st + ky) * iw + ox * st;
                                    const std::size_t krow = koff + (c * k + ky) * k;
                                    for (std::size_t kx = 0; kx < k; ++kx) {
                                        if constexpr (kParamsActive) {
                                            nb.product(param_vars[krow + kx],
                                                       cur[irow + kx]);
                                        } else {
                                            nb.term_scaled(cur[irow + kx],
                                                           flat[krow + kx]);
                                        }
                                    }
                                }
                            }
                            next.push_back(nb.build());
                        }
                    }
                }
                cur.swap(next);
                break;
            }
            case LayerSpec::Kind::activation: {
                const Activation& act = net.activation();
                if (act.kind == ActivationKind::relu) {
                    for (auto& v : cur) v = ad::relu(v);
                } else {
                    for (auto& v : cur) v = ad::softplus(v, act.beta);
                }
                break;
            }
            case LayerSpec::Kind::flatten:
                break;
            case LayerSpec::Kind::avgpool: {
                std::size_t ic, ih, iw;
                chw_of(cur_shape, "avgpool", ic, ih, iw);
                const std::size_t w = ls.window;
                const std::size_t oh = ih / w, ow = iw / w;
                const double coeff = 1.0 / static_cast<double>(w * w);
                next.clear();
                next.reserve(ic * oh * ow);
                for (std::size_t c = 0; c < ic; ++c) {
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            ad::NodeBuilder<T> nb(tape);
                            for (std::size_t dy = 0; dy < w; ++dy) {
                                const std::size_t irow =
                                    (c * ih + oy * w + dy) * iw + ox * w;
                                for (std::size_t dx = 0; dx < w; ++dx) {
                                    nb.term_scaled(cur[irow + dx], coeff);
                                }
                            }
                            next.push_back(nb.build());
                        }
                    }
                }
                cur.swap(next);
                break;
            }
        }
        cur_shape = net.output_shapes()[li];
    }
    return cur;
}

ad::Tape<double>& scratch_tape() {
    thread_local ad::Tape<double> tape;
    return tape;
}

}  // namespace

Tensor Network::scores(const Tensor& x) const {
    if (x.shape() != input_shape_) {
        throw ShapeError("scores: input shape " + x.shape().str() + " expected " +
                         input_shape_.str());
    }
    check_finite(x, "scores input");
    ad::Tape<double>& tape = scratch_tape();
    tape.reset();
    std::vector<ad::Var<double>> in;
    in.reserve(x.size());
    for (double v : x.data()) in.emplace_back(v);
    auto out = forward_walk<double, false>(*this, tape, std::span<const ad::Var<double>>(in),
                                           {});
    Tensor s(Shape{out.size()});
    for (std::size_t i = 0; i < out.size(); ++i) s[i] = out[i].value();
    check_finite(s, "scores output");
    return s;
}

std::size_t Network::predict(const Tensor& x) const {
    const Tensor s = scores(x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i] > s[best]) best = i;
    }
    return best;
}

Tensor forward_scores(const Network& net, const Tensor& x) { return net.scores(x); }

std::size_t predicted_label(const Network& net, const Tensor& x) { return net.predict(x); }

Network smooth_surrogate(const Network& net, double beta) {
    if (!(beta > 0.0)) throw ValueError("smooth_surrogate: beta must be > 0");
    Network out = net;
    out.set_activation(Activation{ActivationKind::softplus, beta});
    return out;
}

DifferentiableScalar score_function(const Network& net, std::size_t label) {
    if (label >= net.class_count()) {
        throw ValueError("score_function: label " + std::to_string(label) +
                         " out of range for " + std::to_string(net.class_count()) +
                         " classes");
    }
    const Network* n = &net;
    return DifferentiableScalar(
        net.input_shape(),
        [n, label]<typename T>(ad::Tape<T>& tape,
                               std::span<const ad::Var<T>> x) -> ad::Var<T> {
            auto scores = forward_walk<T, false>(*n, tape, x, {});
            return scores[label];
        });
}

DifferentiableScalar input_loss_function(const Network& net, std::size_t label) {
    if (label >= net.class_count()) {
        throw ValueError("input_loss_function: label out of range");
    }
    const Network* n = &net;
    return DifferentiableScalar(
        net.input_shape(),
        [n, label]<typename T>(ad::Tape<T>& tape,
                               std::span<const ad::Var<T>> x) -> ad::Var<T> {
            auto scores = forward_walk<T, false>(*n, tape, x, {});
            return ad::log_sum_exp(tape, std::span<const ad::Var<T>>(scores)) -
                   scores[label];
        });
}

DifferentiableScalar parameter_loss_function(const Network& net, const Tensor& x,
                                             std::size_t label) {
    if (label >= net.class_count()) {
        throw ValueError("parameter_loss_function: label out of range");
    }
    if (x.shape() != net.input_shape()) {
        throw ShapeError("parameter_loss_function: sample shape mismatch");
    }
    const Network* n = &net;
    const Tensor* xp = &x;
    return DifferentiableScalar(
        net.flat_parameters().shape(),
        [n, xp, label]<typename T>(ad::Tape<T>& tape,
                                   std::span<const ad::Var<T>> params) -> ad::Var<T> {
            std::vector<ad::Var<T>> in;
            in.reserve(xp->size());
            for (double v : xp->data()) in.emplace_back(T(v));
            auto scores = forward_walk<T, true>(
                *n, tape, std::span<const ad::Var<T>>(in), params);
            return ad::log_sum_exp(tape, std::span<const ad::Var<T>>(scores)) -
                   scores[label];
        });
}

double cross_entropy_value(const Tensor& scores, std::size_t label) {
    if (label >= scores.size()) throw ValueError("cross_entropy_value: label out of range");
    double m = scores[0];
    for (double v : scores.data()) m = std::max(m, v);
    double s = 0.0;
    for (double v : scores.data()) s += std::exp(v - m);
    return m + std::log(s) - scores[label];
}

namespace {

constexpr char kMagic[4] = {'U', 'P', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const char* what) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw TruncatedStreamError(std::string("checkpoint: truncated at ") + what);
    return v;
}

}  // namespace

void save_network(const Network& net, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::uint8_t>(net.activation().kind));
    write_pod(out, net.activation().beta);
    write_pod(out, static_cast<std::uint32_t>(net.input_shape().rank()));
    for (std::size_t e : net.input_shape().extents()) {
        write_pod(out, static_cast<std::uint32_t>(e));
    }
    write_pod(out, static_cast<std::uint32_t>(net.layers().size()));
    for (const LayerSpec& ls : net.layers()) {
        write_pod(out, static_cast<std::uint8_t>(ls.kind));
        std::uint32_t a = 0, b = 0, c = 0;
        switch (ls.kind) {
            case LayerSpec::Kind::dense:
                a = static_cast<std::uint32_t>(ls.units);
                break;
            case LayerSpec::Kind::conv2d:
                a = static_cast<std::uint32_t>(ls.channels);
                b = static_cast<std::uint32_t>(ls.kernel);
                c = static_cast<std::uint32_t>(ls.stride);
                break;
            case LayerSpec::Kind::avgpool:
                a = static_cast<std::uint32_t>(ls.window);
                break;
            default:
                break;
        }
        write_pod(out, a);
        write_pod(out, b);
        write_pod(out, c);
    }
    write_pod(out, static_cast<std::uint64_t>(net.parameter_count()));
    const std::span<const double> params = net.flat_parameters().data();
    out.write(reinterpret_cast<const char*>(params.data()),
              static_cast<std::streamsize>(params.size() * sizeof(double)));
    if (!out) throw IoError("short write to " + path.string());
}

Network load_network(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw BadMagicError("checkpoint: bad magic in " + path.string());
    }
    const auto version = read_pod<std::uint32_t>(in, "version");
    if (version != kVersion) {
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto act_kind = read_pod<std::uint8_t>(in, "activation");
    if (act_kind > 1) throw ParseError("checkpoint: unknown activation kind");
    Activation act{static_cast<ActivationKind>(act_kind), read_pod<double>(in, "beta")};
    const auto rank = read_pod<std::uint32_t>(in, "input rank");
    if (rank == 0 || rank > 4) throw ParseError("checkpoint: implausible input rank");
    std::vector<std::size_t> extents(rank);
    for (auto& e : extents) e = read_pod<std::uint32_t>(in, "input extent");
    const auto layer_count = read_pod<std::uint32_t>(in, "layer count");
    if (layer_count == 0 || layer_count > 64) {
        throw ParseError("checkpoint: implausible layer count");
    }
    std::vector<LayerSpec> layers;
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        const auto kind = read_pod<std::uint8_t>(in, "layer kind");
        const auto a = read_pod<std::uint32_t>(in, "layer field");
        const auto b = read_pod<std::uint32_t>(in, "layer field");
        const auto c = read_pod<std::uint32_t>(in, "layer field");
        switch (kind) {
            case 0:
                layers.push_back(LayerSpec::dense(a));
                break;
            case 1:
                layers.push_back(LayerSpec::conv2d(a, b, c));
                break;
            case 2:
                layers.push_back(LayerSpec::activation());
                break;
            case 3:
                layers.push_back(LayerSpec::flatten());
                break;
            case 4:
                layers.push_back(LayerSpec::avgpool(a));
                break;
            default:
                throw ParseError("checkpoint: unknown layer kind");
        }
    }
    Network net(Shape(std::move(extents)), std::move(layers), act, /*init_seed=*/0);
    const auto param_count = read_pod<std::uint64_t>(in, "parameter count");
    if (param_count != net.parameter_count()) {
        throw ParseError("checkpoint: parameter count " + std::to_string(param_count) +
                         " does not match architecture (" +
                         std::to_string(net.parameter_count()) + ")");
    }
    Tensor params(Shape{static_cast<std::size_t>(param_count)});
    in.read(reinterpret_cast<char*>(params.data().data()),
            static_cast<std::streamsize>(param_count * sizeof(double)));
    if (!in) throw TruncatedStreamError("checkpoint: truncated parameter block");
    net.set_flat_parameters(params);
    return net;
}

Network make_fcn(Shape input_shape, std::size_t hidden, std::size_t classes,
                 Activation activation, std::uint64_t init_seed) {
    return Network(std::move(input_shape),
                   {LayerSpec::flatten(), LayerSpec::dense(hidden), LayerSpec::activation(),
                    LayerSpec::dense(classes)},
                   activation, init_seed);
}

Network make_cnn(Shape input_shape, std::size_t channels, std::size_t kernel,
                 std::size_t pool_window, std::size_t classes, Activation activation,
                 std::uint64_t init_seed) {
    return Network(std::move(input_shape),
                   {LayerSpec::conv2d(channels, kernel), LayerSpec::activation(),
                    LayerSpec::avgpool(pool_window), LayerSpec::flatten(),
                    LayerSpec::dense(classes)},
                   activation, init_seed);
}

Network make_linear(Shape input_shape, std::size_t classes, Activation activation,
                    std::uint64_t init_seed) {
    return Network(std::move(input_shape),
                   {LayerSpec::flatten(), LayerSpec::dense(classes)}, activation,
                   init_seed);
}

}  // namespace upi
