#pragma once

// Per-component histograms and Shannon entropy of BF16 tensors: how many
// bits of information the sign, exponent and mantissa fields actually carry
// versus their 1+8+7 bits of capacity.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

#include "neuzip/bitfloat.hpp"

namespace neuzip {

struct ComponentHistogram {
    std::array<std::uint64_t, 2> sign_counts{};
    std::array<std::uint64_t, 256> exp_counts{};
    std::array<std::uint64_t, 128> mant_counts{};
    std::uint64_t total = 0;

    void add(Bf16 x) {
        const ComponentTriple t = split(x);
        ++sign_counts[t.sign];
        ++exp_counts[t.exponent];
        ++mant_counts[t.mantissa];
        ++total;
    }

    /// Associative, commutative merge for sharded accumulation.
    void merge(const ComponentHistogram& other) {
        for (std::size_t i = 0; i < 2; ++i) sign_counts[i] += other.sign_counts[i];
        for (std::size_t i = 0; i < 256; ++i) exp_counts[i] += other.exp_counts[i];
        for (std::size_t i = 0; i < 128; ++i) mant_counts[i] += other.mant_counts[i];
        total += other.total;
    }
};

/// H = -sum p_i log2 p_i over nonzero bins, in bits per symbol.
inline double shannon_entropy(std::span<const std::uint64_t> counts) {
    std::uint64_t total = 0;
    for (std::uint64_t c : counts) total += c;
    if (counts.empty() || total == 0) {
        throw std::invalid_argument("shannon_entropy: empty histogram");
    }
    double h = 0.0;
    const double n = static_cast<double>(total);
    for (std::uint64_t c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h < 0.0 ? 0.0 : h;
}

struct EntropyReport {
    double h_sign = 0.0;  // <= 1 bit
    double h_exp = 0.0;   // <= 8 bits
    double h_mant = 0.0;  // <= 7 bits
    /// 16 / (h_sign + h_exp + h_mant), capped at 999 for degenerate tensors.
    double ideal_ratio = 0.0;
    /// 16 / (1 + h_exp + 7): what compressing only exponents can reach.
    double exponent_only_ratio = 0.0;
};

constexpr double kRatioCap = 999.0;

inline EntropyReport report_from_histogram(const ComponentHistogram& hist) {
    if (hist.total == 0) {
        throw std::invalid_argument("entropy report: empty histogram");
    }
    EntropyReport r;
    r.h_sign = shannon_entropy(hist.sign_counts);
    r.h_exp = shannon_entropy(hist.exp_counts);
    r.h_mant = shannon_entropy(hist.mant_counts);
    const double h_total = r.h_sign + r.h_exp + r.h_mant;
    r.ideal_ratio = (h_total <= 16.0 / kRatioCap) ? kRatioCap : 16.0 / h_total;
    r.exponent_only_ratio = 16.0 / (1.0 + r.h_exp + 7.0);
    return r;
}

inline ComponentHistogram build_histogram(std::span<const Bf16> values) {
    ComponentHistogram hist;
    for (Bf16 v : values) hist.add(v);
    return hist;
}

inline EntropyReport analyze_tensor(std::span<const Bf16> values) {
    if (values.empty()) {
        throw std::invalid_argument("analyze_tensor: empty input");
    }
    return report_from_histogram(build_histogram(values));
}

} // namespace neuzip
