#include "gramnas/random.hpp"

#include <cmath>

namespace gramnas {

auto Rng::normal() -> double
{
    // Box-Muller on two fresh uniforms.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) {
        u1 = 0x1.0p-53;
    }
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

auto Rng::weighted(std::span<const double> weights) -> std::size_t
{
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    if (total <= 0.0) {
        return weights.size();
    }
    double target = uniform() * total;
    double running = 0.0;
    std::size_t last_positive = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) {
            continue;
        }
        running += weights[i];
        last_positive = i;
        if (target < running) {
            return i;
        }
    }
    return last_positive;
}

auto stable_hash(std::string_view text, std::uint64_t seed) -> std::uint64_t
{
    std::uint64_t h = 0xcbf29ce484222325ULL ^ Rng::mix(seed);
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace gramnas
