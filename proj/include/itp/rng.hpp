#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace itp {

std::uint64_t splitmix64(std::uint64_t x);

// Seed splitting: every random stream in a run is derived from one master seed
// as splitmix64(master ^ splitmix64(fnv1a(stream) + index)). Streams with
// different names or indices are decorrelated.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index = 0);

// Thin wrapper over mt19937_64. The distributions are implemented here from the
// raw 64-bit output so draws are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    // Uniform integer in [0, n). n must be positive.
    std::size_t below(std::size_t n);
    // Index drawn from a normalized probability vector.
    std::size_t categorical(std::span<const double> probs);

private:
    std::mt19937_64 engine_;
};

}  // namespace itp
