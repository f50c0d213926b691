#pragma once

// Counter-based pseudorandom generator for reproducible synthetic streams.
//
// Word i of stream `seed` is splitmix64(seed + (i+1) * 0x9E3779B97F4A7C15).
// Uniform doubles take the top 53 bits; Gaussian samples use Box-Muller on
// counter pairs (2i, 2i+1). Substreams are derived by mixing a tag into the
// seed, so independent streams never share counters. The full recipe is
// documented in the README so other implementations can reproduce streams.

#include <cmath>
#include <cstdint>
#include <vector>

#include "neuzip/bitfloat.hpp"

namespace neuzip::rng {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

constexpr std::uint64_t word(std::uint64_t seed, std::uint64_t counter) {
    return mix64(seed + (counter + 1) * kGolden);
}

/// Derives an independent substream seed from (seed, tag).
constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed ^ mix64(tag + kGolden));
}

/// Uniform in [0, 1).
inline double uniform(std::uint64_t seed, std::uint64_t counter) {
    return static_cast<double>(word(seed, counter) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller; consumes counters 2i and 2i+1 for sample i.
inline double gaussian(std::uint64_t seed, std::uint64_t index) {
    const double u1 =
        (static_cast<double>(word(seed, 2 * index) >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform(seed, 2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
}

/// Sequential convenience wrapper around the counter-based core.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() { return word(seed_, counter_++); }
    double next_uniform() { return uniform(seed_, counter_++); }
    double next_gaussian() {
        const double g = gaussian(seed_, gauss_index_++);
        return g;
    }
    Stream fork(std::uint64_t tag) const { return Stream(derive(seed_, tag)); }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    std::uint64_t gauss_index_ = 0;
};

/// n BF16 samples from N(0, sigma^2), rounded to nearest-even.
inline std::vector<Bf16> gaussian_bf16(std::uint64_t seed, std::size_t n,
                                       double sigma) {
    std::vector<Bf16> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = Bf16::from_float(
            static_cast<float>(sigma * gaussian(seed, i)));
    }
    return out;
}

} // namespace neuzip::rng
