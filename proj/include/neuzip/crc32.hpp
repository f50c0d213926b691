#pragma once

// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320), table-driven.

#include <array>
#include <cstdint>
#include <span>

namespace neuzip {

namespace detail {
inline constexpr std::array<std::uint32_t, 256> kCrcTable = [] {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int bit = 0; bit < 8; ++bit) {
            c = (c & 1u) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
        }
        table[i] = c;
    }
    return table;
}();
} // namespace detail

/// Incremental CRC-32 accumulator.
class Crc32 {
public:
    void update(std::span<const std::uint8_t> data) {
        for (std::uint8_t b : data) {
            state_ = detail::kCrcTable[(state_ ^ b) & 0xFFu] ^ (state_ >> 8);
        }
    }
    std::uint32_t value() const { return state_ ^ 0xFFFFFFFFu; }

private:
    std::uint32_t state_ = 0xFFFFFFFFu;
};

inline std::uint32_t crc32(std::span<const std::uint8_t> data) {
    Crc32 crc;
    crc.update(data);
    return crc.value();
}

} // namespace neuzip
