// Python surface for the upi lab: numpy arrays in, numpy arrays out.
// Everything here is a thin adapter; the C++ headers hold the semantics.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "upi/attack.hpp"
#include "upi/data.hpp"
#include "upi/errors.hpp"
#include "upi/eval.hpp"
#include "upi/interpret.hpp"
#include "upi/network.hpp"
#include "upi/train.hpp"

namespace py = pybind11;

namespace {

using upi::Dataset;
using upi::Interpreter;
using upi::Network;
using upi::PerturbationBudget;
using upi::Shape;
using upi::Tensor;

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using LabelArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

Tensor tensor_from(const DoubleArray& a) {
    std::vector<std::size_t> dims(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) {
        dims[static_cast<std::size_t>(i)] = static_cast<std::size_t>(a.shape(i));
    }
    Tensor t{Shape(std::move(dims))};
    std::memcpy(t.data().data(), a.data(), sizeof(double) * t.size());
    return t;
}

py::array_t<double> array_from(const Tensor& t) {
    std::vector<py::ssize_t> dims;
    dims.reserve(t.shape().rank());
    for (std::size_t e : t.shape().extents()) {
        dims.push_back(static_cast<py::ssize_t>(e));
    }
    py::array_t<double> out(dims);
    std::memcpy(out.mutable_data(), t.data().data(), sizeof(double) * t.size());
    return out;
}

// images: (N, ...) with at least one sample axis left after the batch axis.
Dataset dataset_from(const DoubleArray& images, const LabelArray& labels,
                     std::size_t classes) {
    if (images.ndim() < 2) {
        throw upi::ValueError("images must have shape (count, ...), got rank " +
                              std::to_string(images.ndim()));
    }
    if (labels.ndim() != 1 || labels.shape(0) != images.shape(0)) {
        throw upi::ValueError("labels must be one label per image");
    }
    const auto count = static_cast<std::size_t>(images.shape(0));
    std::vector<std::size_t> dims;
    for (py::ssize_t i = 1; i < images.ndim(); ++i) {
        dims.push_back(static_cast<std::size_t>(images.shape(i)));
    }
    const Shape sample_shape{std::vector<std::size_t>(dims)};
    const std::size_t stride = sample_shape.count();

    Dataset d;
    d.class_count = classes;
    d.images.reserve(count);
    d.labels.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Tensor t{sample_shape};
        std::memcpy(t.data().data(), images.data() + i * stride, sizeof(double) * stride);
        d.images.push_back(std::move(t));
        const std::int64_t label = labels.data()[i];
        if (label < 0) {
            throw upi::ValueError("negative label at index " + std::to_string(i));
        }
        d.labels.push_back(static_cast<std::size_t>(label));
    }
    d.validate();
    return d;
}

std::pair<py::array_t<double>, py::array_t<std::int64_t>> arrays_from(const Dataset& d) {
    std::vector<py::ssize_t> dims{static_cast<py::ssize_t>(d.size())};
    for (std::size_t e : d.images.front().shape().extents()) {
        dims.push_back(static_cast<py::ssize_t>(e));
    }
    py::array_t<double> images(dims);
    const std::size_t stride = d.images.front().size();
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::memcpy(images.mutable_data() + i * stride, d.images[i].data().data(),
                    sizeof(double) * stride);
    }
    py::array_t<std::int64_t> labels(static_cast<py::ssize_t>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) {
        labels.mutable_data()[i] = static_cast<std::int64_t>(d.labels[i]);
    }
    return {std::move(images), std::move(labels)};
}

Shape shape_from(const std::vector<std::size_t>& extents) {
    return Shape{std::vector<std::size_t>(extents)};
}

upi::Activation activation_from(const std::string& kind, double beta) {
    upi::Activation a;
    a.beta = beta;
    if (kind == "relu") {
        a.kind = upi::ActivationKind::relu;
    } else if (kind == "softplus") {
        a.kind = upi::ActivationKind::softplus;
    } else {
        throw upi::ValueError("unknown activation '" + kind + "'");
    }
    return a;
}

Interpreter interpreter_from(const std::string& method, std::size_t ig_steps) {
    Interpreter it;
    it.method = upi::interpretation_method_from_string(method);
    it.ig.steps = ig_steps;
    return it;
}

PerturbationBudget budget_from(double epsilon, const std::string& norm) {
    PerturbationBudget b{epsilon, upi::norm_kind_from_string(norm)};
    b.validate();
    return b;
}

// sigma defaults to epsilon/100, the attacks' own convention.
double sigma_or_default(std::optional<double> sigma, double epsilon) {
    return sigma.has_value() ? *sigma : epsilon / 100.0;
}

py::dict dict_from(const upi::UniversalAttackResult& r) {
    py::dict out;
    out["delta"] = array_from(r.perturbation.delta());
    out["epoch_objective"] = r.epoch_objective;
    out["skipped"] = r.skipped_evaluations;
    return out;
}

py::dict dict_from(const upi::PerImageAttackResult& r) {
    py::dict out;
    out["delta"] = array_from(r.perturbation.delta());
    out["objective"] = r.objective;
    return out;
}

upi::UpiGradConfig grad_config_from(double epsilon, double stepsize,
                                    std::optional<double> sigma, std::size_t epochs,
                                    std::size_t batch_size, std::uint64_t seed) {
    upi::UpiGradConfig cfg;
    cfg.stepsize = stepsize;
    cfg.noise_sigma = sigma_or_default(sigma, epsilon);
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Universal perturbations for interpretation maps";
    m.attr("__version__") = "0.1.0";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const upi::IoError& e) {
            PyErr_SetString(PyExc_OSError, e.what());
        } catch (const upi::ShapeError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const upi::ValueError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        } catch (const upi::ParseError& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
        // Everything else falls through to the default translators.
    });

    py::class_<Network>(m, "Network")
        .def_property_readonly("input_shape",
                               [](const Network& n) {
                                   return py::tuple(py::cast(n.input_shape().extents()));
                               })
        .def_property_readonly("class_count", &Network::class_count)
        .def_property_readonly("parameter_count", &Network::parameter_count)
        .def(
            "scores", [](const Network& n, const DoubleArray& x) {
                return array_from(n.scores(tensor_from(x)));
            },
            py::arg("x"))
        .def(
            "predict",
            [](const Network& n, const DoubleArray& x) { return n.predict(tensor_from(x)); },
            py::arg("x"));

    m.def(
        "make_fcn",
        [](const std::vector<std::size_t>& input_shape, std::size_t hidden,
           std::size_t classes, std::uint64_t seed, const std::string& activation,
           double beta) {
            return upi::make_fcn(shape_from(input_shape), hidden, classes,
                                 activation_from(activation, beta), seed);
        },
        py::arg("input_shape"), py::arg("hidden"), py::arg("classes"), py::arg("seed") = 0,
        py::arg("activation") = "softplus", py::arg("beta") = 20.0,
        "Two-layer fully connected classifier.");

    m.def(
        "make_cnn",
        [](const std::vector<std::size_t>& input_shape, std::size_t channels,
           std::size_t kernel, std::size_t pool, std::size_t classes, std::uint64_t seed,
           const std::string& activation, double beta) {
            return upi::make_cnn(shape_from(input_shape), channels, kernel, pool, classes,
                                 activation_from(activation, beta), seed);
        },
        py::arg("input_shape"), py::arg("channels"), py::arg("kernel"), py::arg("pool"),
        py::arg("classes"), py::arg("seed") = 0, py::arg("activation") = "softplus",
        py::arg("beta") = 20.0, "Conv + average-pool + dense classifier.");

    m.def(
        "save_network",
        [](const Network& net, const std::filesystem::path& path) {
            upi::save_network(net, path);
        },
        py::arg("net"), py::arg("path"));
    m.def("load_network", &upi::load_network, py::arg("path"));

    m.def(
        "train",
        [](Network& net, const DoubleArray& images, const LabelArray& labels,
           std::size_t epochs, std::size_t batch_size, double learning_rate,
           std::uint64_t seed) {
            const Dataset d = dataset_from(images, labels, net.class_count());
            const upi::TrainReport r =
                upi::train_erm(net, d, upi::TrainConfig{epochs, batch_size, learning_rate, seed});
            py::dict out;
            out["epoch_loss"] = r.epoch_loss;
            out["train_accuracy"] = r.train_accuracy;
            return out;
        },
        py::arg("net"), py::arg("images"), py::arg("labels"), py::arg("epochs") = 20,
        py::arg("batch_size") = 64, py::arg("learning_rate") = 0.05, py::arg("seed") = 0,
        "Minibatch SGD on mean cross-entropy; mutates net.");

    m.def(
        "accuracy",
        [](const Network& net, const DoubleArray& images, const LabelArray& labels) {
            return upi::accuracy(net, dataset_from(images, labels, net.class_count()));
        },
        py::arg("net"), py::arg("images"), py::arg("labels"));

    m.def(
        "saliency",
        [](const Network& net, const DoubleArray& x, const std::string& method,
           std::size_t ig_steps, std::optional<std::size_t> label) {
            const upi::InterpretationMap map =
                interpreter_from(method, ig_steps).map(net, tensor_from(x), label);
            py::dict out;
            out["values"] = array_from(map.values);
            out["label"] = map.label;
            return out;
        },
        py::arg("net"), py::arg("x"), py::arg("method") = "simple_gradient",
        py::arg("ig_steps") = 10, py::arg("label") = std::nullopt,
        "l1-normalized interpretation map and the class it explains.");

    m.def(
        "completeness_gap",
        [](const Network& net, const DoubleArray& x, std::size_t steps,
           std::optional<std::size_t> label) {
            upi::IGConfig cfg;
            cfg.steps = steps;
            return upi::completeness_gap(net, tensor_from(x), cfg, label);
        },
        py::arg("net"), py::arg("x"), py::arg("steps") = 10, py::arg("label") = std::nullopt,
        "Relative gap between the integrated-gradients sum and the score difference.");

    m.def(
        "normalized_dissimilarity",
        [](const Network& net, const DoubleArray& x, const DoubleArray& x_prime,
           const std::string& method, std::size_t ig_steps) {
            return upi::normalized_dissimilarity(net, interpreter_from(method, ig_steps),
                                                 tensor_from(x), tensor_from(x_prime));
        },
        py::arg("net"), py::arg("x"), py::arg("x_prime"),
        py::arg("method") = "simple_gradient", py::arg("ig_steps") = 10,
        "|| I(x) - I(x') ||_2 / || I(x) ||_2.");

    m.def(
        "upi_grad",
        [](const Network& net, const DoubleArray& images, const LabelArray& labels,
           std::size_t classes, double epsilon, const std::string& norm,
           const std::string& method, std::size_t ig_steps, double stepsize,
           std::optional<double> noise_sigma, std::size_t epochs, std::size_t batch_size,
           std::uint64_t seed) {
            return dict_from(upi::upi_grad(
                net, interpreter_from(method, ig_steps), dataset_from(images, labels, classes),
                budget_from(epsilon, norm),
                grad_config_from(epsilon, stepsize, noise_sigma, epochs, batch_size, seed)));
        },
        py::arg("net"), py::arg("images"), py::arg("labels"), py::arg("classes"),
        py::arg("epsilon"), py::arg("norm") = "l2", py::arg("method") = "simple_gradient",
        py::arg("ig_steps") = 10, py::arg("stepsize") = 0.5,
        py::arg("noise_sigma") = std::nullopt, py::arg("epochs") = 10,
        py::arg("batch_size") = 64, py::arg("seed") = 0,
        "Universal gradient-ascent perturbation against the interpretation map.");

    m.def(
        "upi_pca",
        [](const Network& net, const DoubleArray& images, const LabelArray& labels,
           std::size_t classes, double epsilon, const std::string& norm,
           const std::string& variant, const std::string& method, std::size_t ig_steps,
           double stepsize, std::optional<double> noise_sigma, std::size_t epochs,
           std::size_t batch_size, std::size_t pgd_iterations, double pgd_stepsize,
           std::uint64_t seed) {
            upi::UpiPcaConfig cfg;
            cfg.base = grad_config_from(epsilon, stepsize, noise_sigma, epochs, batch_size,
                                        seed);
            if (variant == "fgm") {
                cfg.variant = upi::UpiPcaVariant::fgm;
            } else if (variant == "pgd") {
                cfg.variant = upi::UpiPcaVariant::pgd;
            } else {
                throw upi::ValueError("unknown upi_pca variant '" + variant + "'");
            }
            cfg.pgd = upi::PgdConfig{pgd_iterations, pgd_stepsize};
            return dict_from(upi::upi_pca(net, interpreter_from(method, ig_steps),
                                          dataset_from(images, labels, classes),
                                          budget_from(epsilon, norm), cfg));
        },
        py::arg("net"), py::arg("images"), py::arg("labels"), py::arg("classes"),
        py::arg("epsilon"), py::arg("norm") = "l2", py::arg("variant") = "fgm",
        py::arg("method") = "simple_gradient", py::arg("ig_steps") = 10,
        py::arg("stepsize") = 0.5, py::arg("noise_sigma") = std::nullopt,
        py::arg("epochs") = 10, py::arg("batch_size") = 64, py::arg("pgd_iterations") = 150,
        py::arg("pgd_stepsize") = 0.5, py::arg("seed") = 0,
        "Stochastic power iteration toward the top singular direction of the "
        "per-sample gradient matrix.");

    m.def(
        "uap_classification",
        [](const Network& net, const DoubleArray& images, const LabelArray& labels,
           std::size_t classes, double epsilon, const std::string& norm, double stepsize,
           std::optional<double> noise_sigma, std::size_t epochs, std::size_t batch_size,
           std::uint64_t seed) {
            return dict_from(upi::uap_classification(
                net, dataset_from(images, labels, classes), budget_from(epsilon, norm),
                grad_config_from(epsilon, stepsize, noise_sigma, epochs, batch_size, seed)));
        },
        py::arg("net"), py::arg("images"), py::arg("labels"), py::arg("classes"),
        py::arg("epsilon"), py::arg("norm") = "l2", py::arg("stepsize") = 0.5,
        py::arg("noise_sigma") = std::nullopt, py::arg("epochs") = 10,
        py::arg("batch_size") = 64, py::arg("seed") = 0,
        "Classification-loss universal perturbation baseline.");

    m.def(
        "per_image_fgm",
        [](const Network& net, const DoubleArray& x, double epsilon, const std::string& norm,
           const std::string& method, std::size_t ig_steps, std::optional<double> sigma,
           std::uint64_t seed) {
            return dict_from(upi::per_image_fgm(net, interpreter_from(method, ig_steps),
                                                tensor_from(x), budget_from(epsilon, norm),
                                                sigma_or_default(sigma, epsilon), seed));
        },
        py::arg("net"), py::arg("x"), py::arg("epsilon"), py::arg("norm") = "l2",
        py::arg("method") = "simple_gradient", py::arg("ig_steps") = 10,
        py::arg("sigma") = std::nullopt, py::arg("seed") = 0,
        "Single-step per-image map attack.");

    m.def(
        "per_image_pgd",
        [](const Network& net, const DoubleArray& x, double epsilon, const std::string& norm,
           const std::string& method, std::size_t ig_steps, std::size_t iterations,
           double stepsize, std::optional<double> sigma, std::uint64_t seed) {
            return dict_from(upi::per_image_pgd(
                net, interpreter_from(method, ig_steps), tensor_from(x),
                budget_from(epsilon, norm), iterations, stepsize,
                sigma_or_default(sigma, epsilon), seed));
        },
        py::arg("net"), py::arg("x"), py::arg("epsilon"), py::arg("norm") = "l2",
        py::arg("method") = "simple_gradient", py::arg("ig_steps") = 10,
        py::arg("iterations") = 150, py::arg("stepsize") = 0.5,
        py::arg("sigma") = std::nullopt, py::arg("seed") = 0,
        "Projected-ascent per-image map attack.");

    m.def(
        "gradient_matrix",
        [](const Network& net, const DoubleArray& images, const LabelArray& labels,
           std::size_t classes, double sigma, std::size_t draws, std::uint64_t seed,
           const std::string& method, std::size_t ig_steps) {
            const upi::GradientMatrix g = upi::gradient_matrix(
                net, interpreter_from(method, ig_steps), dataset_from(images, labels, classes),
                sigma, draws, seed);
            const std::size_t d = g.row_shape.count();
            py::array_t<double> rows({static_cast<py::ssize_t>(g.rows.size()),
                                      static_cast<py::ssize_t>(d)});
            std::vector<std::size_t> samples;
            for (std::size_t i = 0; i < g.rows.size(); ++i) {
                std::memcpy(rows.mutable_data() + i * d, g.rows[i].data().data(),
                            sizeof(double) * d);
                samples.push_back(g.provenance[i].sample_index);
            }
            py::dict out;
            out["rows"] = std::move(rows);
            out["sample_index"] = samples;
            out["skipped"] = g.skipped;
            return out;
        },
        py::arg("net"), py::arg("images"), py::arg("labels"), py::arg("classes"),
        py::arg("sigma"), py::arg("draws") = 1, py::arg("seed") = 0,
        py::arg("method") = "simple_gradient", py::arg("ig_steps") = 10,
        "Per-sample objective gradients at shared noise draws, one flattened row per "
        "sample.");

    m.def(
        "top_singular_direction",
        [](const DoubleArray& rows) {
            if (rows.ndim() != 2) {
                throw upi::ValueError("rows must be a 2-d matrix");
            }
            upi::GradientMatrix g;
            const auto d = static_cast<std::size_t>(rows.shape(1));
            g.row_shape = Shape{d};
            for (py::ssize_t i = 0; i < rows.shape(0); ++i) {
                Tensor t{g.row_shape};
                std::memcpy(t.data().data(), rows.data() + static_cast<std::size_t>(i) * d,
                            sizeof(double) * d);
                g.rows.push_back(std::move(t));
                g.provenance.push_back({static_cast<std::size_t>(i), 0});
            }
            const upi::SingularVectorResult r = upi::top_right_singular_vector_oracle(g);
            py::dict out;
            out["vector"] = array_from(r.vector);
            out["sigma1"] = r.sigma1;
            out["sigma2"] = r.sigma2;
            out["near_tie"] = r.near_tie;
            return out;
        },
        py::arg("rows"),
        "Deterministic power iteration for the top right singular vector of a row "
        "matrix.");

    m.def(
        "random_universal",
        [](const std::vector<std::size_t>& shape, double epsilon, const std::string& norm,
           std::uint64_t seed) {
            return array_from(upi::random_universal_perturbation(budget_from(epsilon, norm),
                                                                 shape_from(shape), seed)
                                  .delta());
        },
        py::arg("shape"), py::arg("epsilon"), py::arg("norm") = "l2", py::arg("seed") = 0,
        "Gaussian direction rescaled to exactly epsilon in the budget norm.");

    m.def(
        "mean_dissimilarity",
        [](const Network& net, const DoubleArray& images, const LabelArray& labels,
           std::size_t classes, const DoubleArray& delta, double epsilon,
           const std::string& norm, const std::string& method, std::size_t ig_steps,
           bool clamp_pixels, bool freeze_labels) {
            upi::EvalOptions opts;
            opts.clamp_pixels = clamp_pixels;
            opts.freeze_labels = freeze_labels;
            const upi::DissimilarityReport r = upi::mean_dissimilarity_report(
                net, interpreter_from(method, ig_steps), dataset_from(images, labels, classes),
                upi::Perturbation(tensor_from(delta), budget_from(epsilon, norm)), opts);
            py::dict out;
            out["mean"] = r.mean;
            out["scores"] = r.scores;
            out["sample_index"] = r.sample_index;
            out["count"] = r.count;
            out["skipped"] = r.skipped_degenerate;
            return out;
        },
        py::arg("net"), py::arg("images"), py::arg("labels"), py::arg("classes"),
        py::arg("delta"), py::arg("epsilon"), py::arg("norm") = "l2",
        py::arg("method") = "simple_gradient", py::arg("ig_steps") = 10,
        py::arg("clamp_pixels") = true, py::arg("freeze_labels") = false,
        "Mean normalized interpretation dissimilarity of one universal perturbation "
        "over a test set.");

    m.def(
        "fooling_rate",
        [](const Network& net, const DoubleArray& images, const LabelArray& labels,
           std::size_t classes, const DoubleArray& delta, double epsilon,
           const std::string& norm, bool clamp_pixels) {
            const upi::FoolingReport r =
                upi::fooling_rate(net, dataset_from(images, labels, classes),
                                  upi::Perturbation(tensor_from(delta), budget_from(epsilon, norm)),
                                  clamp_pixels);
            py::dict out;
            out["fraction"] = r.fraction;
            out["fooled"] = r.fooled;
            out["count"] = r.count;
            return out;
        },
        py::arg("net"), py::arg("images"), py::arg("labels"), py::arg("classes"),
        py::arg("delta"), py::arg("epsilon"), py::arg("norm") = "l2",
        py::arg("clamp_pixels") = true,
        "Fraction of samples whose top-1 prediction changes under delta.");

    m.def(
        "synthetic_blobs",
        [](std::size_t n, std::size_t d, std::size_t k, double spread, std::uint64_t seed) {
            return arrays_from(upi::synthetic_blobs(n, d, k, spread, seed));
        },
        py::arg("n"), py::arg("d"), py::arg("k"), py::arg("spread") = 0.1,
        py::arg("seed") = 0, "Seeded Gaussian clusters in [0,1]^d; returns (images, labels).");

    m.def(
        "load_idx_dataset",
        [](const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
           std::size_t classes) {
            return arrays_from(upi::load_idx_dataset(images_path, labels_path, classes));
        },
        py::arg("images_path"), py::arg("labels_path"), py::arg("classes") = 10,
        "IDX (optionally gzipped) image/label pair; pixels scaled to [0, 255/256].");
}
