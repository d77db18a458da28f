#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace gramnas {

// Thin wrapper over mt19937_64. Uniform draws are computed here rather than
// through <random> distributions so sequences do not depend on the standard
// library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    auto next() -> std::uint64_t { return engine_(); }

    // Uniform in [0, 1).
    auto uniform() -> double { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). n must be positive.
    auto below(std::size_t n) -> std::size_t
    {
        return static_cast<std::size_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
    }

    auto bernoulli(double p) -> bool { return uniform() < p; }

    auto normal() -> double;

    // Index drawn proportionally to the non-negative weights. Returns
    // weights.size() when all weights are zero.
    auto weighted(std::span<const double> weights) -> std::size_t;

    // Independent child stream; advances this generator once.
    auto split() -> Rng { return Rng(mix(engine_())); }

    static auto mix(std::uint64_t x) -> std::uint64_t
    {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::mt19937_64 engine_;
};

// FNV-1a; stable across platforms, used to derive per-term noise seeds.
auto stable_hash(std::string_view text, std::uint64_t seed = 0) -> std::uint64_t;

} // namespace gramnas
