#pragma once

// Bit-exact BFloat16 decomposition and recomposition, mantissa rounding at
// reduced precision, and sub-byte packing of sign+mantissa pairs.
//
// BF16 layout: [15] sign, [14:7] exponent (bias 127), [6:0] mantissa.

#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace neuzip {

/// A BFloat16 value, stored as its raw 16-bit pattern. All 65536 patterns
/// are valid (including NaN, Inf, subnormals and both zeros).
struct Bf16 {
    std::uint16_t bits = 0;

    friend constexpr bool operator==(Bf16, Bf16) = default;

    /// Round-to-nearest-even conversion from FP32. NaN payloads are
    /// quietened so the result is never an Inf pattern by accident.
    static Bf16 from_float(float f) {
        const std::uint32_t u = std::bit_cast<std::uint32_t>(f);
        if ((u & 0x7FFFFFFFu) > 0x7F800000u) {
            return Bf16{static_cast<std::uint16_t>((u >> 16) | 0x0040u)};
        }
        const std::uint32_t rounded = u + 0x7FFFu + ((u >> 16) & 1u);
        return Bf16{static_cast<std::uint16_t>(rounded >> 16)};
    }

    /// Exact widening conversion (BF16 is a prefix of FP32).
    float to_float() const {
        return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
    }

    double to_double() const { return static_cast<double>(to_float()); }

    bool is_finite() const { return (bits & 0x7F80u) != 0x7F80u; }
    bool is_nan() const {
        return (bits & 0x7F80u) == 0x7F80u && (bits & 0x007Fu) != 0;
    }
};

/// The (sign, exponent, mantissa) fields of one BF16 value.
struct ComponentTriple {
    std::uint8_t sign = 0;      // 0 or 1
    std::uint8_t exponent = 0;  // biased by 127, 0..255
    std::uint8_t mantissa = 0;  // 0..127

    friend constexpr bool operator==(ComponentTriple, ComponentTriple) = default;
};

constexpr ComponentTriple split(Bf16 x) {
    return ComponentTriple{
        static_cast<std::uint8_t>(x.bits >> 15),
        static_cast<std::uint8_t>((x.bits >> 7) & 0xFFu),
        static_cast<std::uint8_t>(x.bits & 0x7Fu),
    };
}

constexpr Bf16 merge(ComponentTriple t) {
    if (t.sign > 1) throw std::invalid_argument("merge: sign out of range");
    if (t.mantissa > 127) throw std::invalid_argument("merge: mantissa out of range");
    return Bf16{static_cast<std::uint16_t>(
        (static_cast<std::uint16_t>(t.sign) << 15) |
        (static_cast<std::uint16_t>(t.exponent) << 7) |
        t.mantissa)};
}

/// Result of rounding a 7-bit mantissa down to k retained bits. When the
/// significand rounds up past 1.1111111b the mantissa wraps to zero and
/// `carry` tells the caller to increment the exponent.
struct RoundedMantissa {
    std::uint8_t mantissa = 0;  // only the top k bits may be nonzero
    bool carry = false;
};

/// Round-to-nearest, ties-to-even at bit position k. k must be 0, 1 or 3.
constexpr RoundedMantissa round_mantissa(std::uint8_t m, int k) {
    if (k != 0 && k != 1 && k != 3) {
        throw std::invalid_argument("round_mantissa: k must be 0, 1 or 3");
    }
    if (m > 127) throw std::invalid_argument("round_mantissa: mantissa out of range");
    const int drop = 7 - k;
    const std::uint8_t rem = static_cast<std::uint8_t>(m & ((1u << drop) - 1u));
    const std::uint8_t half = static_cast<std::uint8_t>(1u << (drop - 1));
    std::uint8_t kept = static_cast<std::uint8_t>(m >> drop);
    if (rem > half || (rem == half && (kept & 1u))) {
        kept = static_cast<std::uint8_t>(kept + 1);
    }
    if (kept >= (1u << k)) {
        return RoundedMantissa{0, true};
    }
    return RoundedMantissa{static_cast<std::uint8_t>(kept << drop), false};
}

/// Truncation toward zero at bit position k (fallback when a rounding carry
/// would overflow the exponent).
constexpr std::uint8_t truncate_mantissa(std::uint8_t m, int k) {
    const int drop = 7 - k;
    return static_cast<std::uint8_t>((m >> drop) << drop);
}

/// One sign bit followed by k retained mantissa bits, k in {0,1,3,7}.
/// `mantissa` holds the k-bit value (already shifted down); for k=0 it is 0.
struct SignedMantissa {
    std::uint8_t sign = 0;
    std::uint8_t mantissa = 0;

    friend constexpr bool operator==(SignedMantissa, SignedMantissa) = default;
};

namespace detail {
constexpr bool valid_pack_precision(int k) {
    return k == 0 || k == 1 || k == 3 || k == 7;
}
} // namespace detail

/// Packs (k+1)-bit items MSB-first into bytes. Item widths divide 8, so no
/// item straddles a byte; a final partial byte is zero-padded in its low bits.
inline std::vector<std::uint8_t> pack_signed_mantissas(
    std::span<const SignedMantissa> items, int k) {
    if (!detail::valid_pack_precision(k)) {
        throw std::invalid_argument("pack: k must be one of {0,1,3,7}");
    }
    const unsigned width = static_cast<unsigned>(k) + 1;
    const std::size_t n = items.size();
    std::vector<std::uint8_t> out((n * width + 7) / 8, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const SignedMantissa& it = items[i];
        if (it.sign > 1 || it.mantissa >= (1u << k)) {
            throw std::invalid_argument("pack: item exceeds k+1 bits");
        }
        const unsigned value = (static_cast<unsigned>(it.sign) << k) | it.mantissa;
        const std::size_t bit = i * width;
        const unsigned shift = 8 - width - static_cast<unsigned>(bit % 8);
        out[bit / 8] |= static_cast<std::uint8_t>(value << shift);
    }
    return out;
}

inline std::vector<SignedMantissa> unpack_signed_mantissas(
    std::span<const std::uint8_t> bytes, int k, std::size_t n) {
    if (!detail::valid_pack_precision(k)) {
        throw std::invalid_argument("unpack: k must be one of {0,1,3,7}");
    }
    const unsigned width = static_cast<unsigned>(k) + 1;
    if (bytes.size() != (n * width + 7) / 8) {
        throw std::invalid_argument("unpack: byte count does not match n");
    }
    std::vector<SignedMantissa> out(n);
    const unsigned mask = (1u << width) - 1u;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t bit = i * width;
        const unsigned shift = 8 - width - static_cast<unsigned>(bit % 8);
        const unsigned value = (bytes[bit / 8] >> shift) & mask;
        out[i].sign = static_cast<std::uint8_t>(value >> k);
        out[i].mantissa = static_cast<std::uint8_t>(value & ((1u << k) - 1u));
    }
    return out;
}

} // namespace neuzip
