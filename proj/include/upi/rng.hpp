#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "upi/tensor.hpp"

namespace upi {

// Seeded random source. Distributions are implemented here rather than taken
// from <random> so a fixed seed yields the same stream on every standard
// library; repeated runs must be bit-identical.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; second deviate of each pair is cached.
    double normal();

    Tensor normal_tensor(const Shape& shape, double stddev);

    // Uniform integer in [0, bound), rejection sampled to avoid modulo bias.
    std::uint64_t below(std::uint64_t bound);

    void shuffle(std::vector<std::size_t>& items);

    // Independent substream for (seed, stream); splitmix64-style mixing.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

private:
    std::mt19937_64 gen_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace upi
