#pragma once

#include <cstdint>
#include <vector>

#include "upi/data.hpp"
#include "upi/network.hpp"

namespace upi {

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
};

struct TrainReport {
    // Mean cross-entropy over the full training set after each epoch.
    std::vector<double> epoch_loss;
    double train_accuracy = 0.0;
};

// Minibatch SGD on mean cross-entropy. The sample order is reshuffled every
// epoch from the seed, so a (net, data, config) triple always yields the
// same parameters.
TrainReport train_erm(Network& net, const Dataset& data, const TrainConfig& cfg);

double accuracy(const Network& net, const Dataset& data);
double mean_cross_entropy(const Network& net, const Dataset& data);

}  // namespace upi
