#include "upi/rng.hpp"

#include <cmath>

namespace upi {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    // 1 - uniform() lies in (0, 1]; log stays finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(kTwoPi * u2);
    has_cached_ = true;
    return r * std::cos(kTwoPi * u2);
}

Tensor Rng::normal_tensor(const Shape& shape, double stddev) {
    Tensor out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = stddev * normal();
    return out;
}

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) throw ValueError("Rng::below: zero bound");
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % bound;
    std::uint64_t draw;
    do {
        draw = gen_();
    } while (draw >= limit);
    return draw % bound;
}

void Rng::shuffle(std::vector<std::size_t>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(below(i));
        std::swap(items[i - 1], items[j]);
    }
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace upi
