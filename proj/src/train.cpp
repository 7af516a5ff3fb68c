#include "upi/train.hpp"

#include <numeric>

#include "upi/rng.hpp"

namespace upi {

double accuracy(const Network& net, const Dataset& data) {
    if (data.size() == 0) throw ValueError("accuracy: empty dataset");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (net.predict(data.images[i]) == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

double mean_cross_entropy(const Network& net, const Dataset& data) {
    if (data.size() == 0) throw ValueError("mean_cross_entropy: empty dataset");
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        total += cross_entropy_value(net.scores(data.images[i]), data.labels[i]);
    }
    return total / static_cast<double>(data.size());
}

TrainReport train_erm(Network& net, const Dataset& data, const TrainConfig& cfg) {
    data.validate();
    if (data.size() == 0) throw ValueError("train_erm: empty dataset");
    if (cfg.batch_size == 0) throw ValueError("train_erm: zero batch size");
    if (!(cfg.learning_rate > 0.0)) throw ValueError("train_erm: learning rate must be > 0");

    Tensor params = net.flat_parameters();
    Tensor grad_sum(params.shape());
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    TrainReport report;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(Rng::derive(cfg.seed, epoch));
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            std::fill(grad_sum.data().begin(), grad_sum.data().end(), 0.0);
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                const DifferentiableScalar loss =
                    parameter_loss_function(net, data.images[i], data.labels[i]);
                const GradientResult g = evaluate_with_gradient(loss, params);
                axpy(1.0, g.gradient, grad_sum);
            }
            axpy(-cfg.learning_rate / static_cast<double>(end - start), grad_sum, params);
            check_finite(params, "train_erm parameters");
            net.set_flat_parameters(params);
        }
        report.epoch_loss.push_back(mean_cross_entropy(net, data));
    }
    report.train_accuracy = accuracy(net, data);
    return report;
}

}  // namespace upi
