#pragma once

#include <cstdint>
#include <random>

namespace memnet {

/// Seeded 64-bit Mersenne Twister with distribution helpers written out by
/// hand, so streams are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [-1, 1).
    double symmetric() { return 2.0 * uniform() - 1.0; }

    bool coin() { return (engine_() >> 63) != 0; }

    std::uint64_t next() { return engine_(); }

    friend bool operator==(const Rng&, const Rng&) = default;

private:
    std::mt19937_64 engine_;
};

}  // namespace memnet
