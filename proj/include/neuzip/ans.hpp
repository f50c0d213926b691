#pragma once

// Byte-alphabet range-ANS coder with 12-bit quantized frequency tables.
//
// State is 32-bit with byte-aligned renormalization against a 2^23 lower
// bound. Streams are split into 65536-symbol chunks that encode and decode
// independently, so chunks can be processed in parallel while the byte
// stream stays identical for any worker count.
//
// Chunk payload layout: renormalization bytes in decoder consumption order,
// then the encoder's final 32-bit state (little-endian) at the tail. The
// decoder seeds its state from the tail, consumes bytes front to back, and
// must land back on the initial state with no bytes left over; anything
// else is reported as desynchronization.

#include <algorithm>
#include <array>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <span>
#include <vector>

#include "neuzip/errors.hpp"
#include "neuzip/parallel.hpp"

namespace neuzip {

namespace ans {
constexpr std::uint32_t kProbBits = 12;
constexpr std::uint32_t kProbScale = 1u << kProbBits;  // 4096
constexpr std::uint32_t kStateLow = 1u << 23;
constexpr std::size_t kChunkSymbols = 65536;
constexpr std::size_t kTableBytes = 512;  // 256 x u16 little-endian
} // namespace ans

/// Quantized symbol statistics: 256 frequencies summing to exactly 4096,
/// with every source-present symbol kept at frequency >= 1.
class FrequencyTable {
public:
    /// Default table assigns all 4096 slots to symbol 0; it exists so blob
    /// types are default-constructible and is always overwritten in use.
    FrequencyTable() : FrequencyTable([] {
        std::array<std::uint16_t, 256> f{};
        f[0] = static_cast<std::uint16_t>(ans::kProbScale);
        return f;
    }()) {}

    /// Largest-remainder quantization of raw counts to a 4096 total.
    /// Present symbols are floored at 1 by stealing from the largest
    /// frequency; all ties break by ascending symbol index.
    static FrequencyTable from_counts(std::span<const std::uint64_t> counts) {
        if (counts.size() != 256) {
            throw std::invalid_argument("frequency table needs 256 counts");
        }
        const std::uint64_t total =
            std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
        if (total == 0) {
            throw std::invalid_argument("frequency table: all counts are zero");
        }

        std::array<std::uint16_t, 256> freqs{};
        std::array<std::uint64_t, 256> remainders{};
        std::uint32_t assigned = 0;
        for (int s = 0; s < 256; ++s) {
            const std::uint64_t scaled = counts[s] * ans::kProbScale;
            freqs[s] = static_cast<std::uint16_t>(scaled / total);
            remainders[s] = scaled % total;
            assigned += freqs[s];
        }

        std::array<int, 256> order{};
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return remainders[a] > remainders[b];
        });
        for (int i = 0; assigned < ans::kProbScale; ++i) {
            ++freqs[order[static_cast<std::size_t>(i) % 256]];
            ++assigned;
        }

        // Floor-at-1 repair for present symbols that quantized to zero.
        for (int s = 0; s < 256; ++s) {
            if (counts[s] == 0 || freqs[s] != 0) continue;
            int donor = 0;
            for (int d = 1; d < 256; ++d) {
                if (freqs[d] > freqs[donor]) donor = d;
            }
            --freqs[donor];
            freqs[s] = 1;
        }
        return FrequencyTable(freqs);
    }

    /// Builds from explicit frequencies; validates the 4096 sum.
    static FrequencyTable from_frequencies(const std::array<std::uint16_t, 256>& freqs) {
        std::uint32_t sum = 0;
        for (std::uint16_t f : freqs) sum += f;
        if (sum != ans::kProbScale) {
            throw FormatError("frequency table does not sum to 4096");
        }
        return FrequencyTable(freqs);
    }

    std::uint16_t freq(std::uint8_t symbol) const { return freqs_[symbol]; }
    std::uint16_t cum(std::uint8_t symbol) const { return cum_[symbol]; }
    bool present(std::uint8_t symbol) const { return freqs_[symbol] != 0; }
    std::uint8_t symbol_at(std::uint32_t slot) const { return slot_to_symbol_[slot]; }
    const std::array<std::uint16_t, 256>& frequencies() const { return freqs_; }

    std::array<std::uint8_t, ans::kTableBytes> serialize() const {
        std::array<std::uint8_t, ans::kTableBytes> out{};
        for (int s = 0; s < 256; ++s) {
            out[2 * s] = static_cast<std::uint8_t>(freqs_[s] & 0xFFu);
            out[2 * s + 1] = static_cast<std::uint8_t>(freqs_[s] >> 8);
        }
        return out;
    }

    static FrequencyTable deserialize(std::span<const std::uint8_t> bytes) {
        if (bytes.size() != ans::kTableBytes) {
            throw FormatError("frequency table must be 512 bytes");
        }
        std::array<std::uint16_t, 256> freqs{};
        for (int s = 0; s < 256; ++s) {
            freqs[s] = static_cast<std::uint16_t>(
                bytes[2 * s] | (static_cast<std::uint16_t>(bytes[2 * s + 1]) << 8));
        }
        return from_frequencies(freqs);
    }

    friend bool operator==(const FrequencyTable& a, const FrequencyTable& b) {
        return a.freqs_ == b.freqs_;
    }

private:
    explicit FrequencyTable(const std::array<std::uint16_t, 256>& freqs)
        : freqs_(freqs) {
        std::uint32_t c = 0;
        for (int s = 0; s < 256; ++s) {
            cum_[s] = static_cast<std::uint16_t>(c);
            for (std::uint32_t slot = 0; slot < freqs_[s]; ++slot) {
                slot_to_symbol_[c + slot] = static_cast<std::uint8_t>(s);
            }
            c += freqs_[s];
        }
    }

    std::array<std::uint16_t, 256> freqs_{};
    std::array<std::uint16_t, 256> cum_{};
    std::array<std::uint8_t, ans::kProbScale> slot_to_symbol_{};
};

inline FrequencyTable build_table(std::span<const std::uint64_t> counts) {
    return FrequencyTable::from_counts(counts);
}

/// One independently decodable unit of an AnsStream.
struct AnsChunk {
    std::uint32_t symbol_count = 0;
    std::vector<std::uint8_t> payload;

    friend bool operator==(const AnsChunk&, const AnsChunk&) = default;
};

struct AnsStream {
    FrequencyTable table;
    std::vector<AnsChunk> chunks;

    std::uint64_t symbol_count() const {
        std::uint64_t n = 0;
        for (const AnsChunk& c : chunks) n += c.symbol_count;
        return n;
    }
    /// Serialized size of the chunk framing and payloads (table excluded).
    std::uint64_t stream_bytes() const {
        std::uint64_t n = 4;
        for (const AnsChunk& c : chunks) n += 8 + c.payload.size();
        return n;
    }
};

namespace detail {

inline void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFFu));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFFu));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFFu));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

inline std::uint32_t get_u32le(std::span<const std::uint8_t> b) {
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace detail

/// Encodes one chunk of symbols against the table.
inline AnsChunk ans_encode_chunk(std::span<const std::uint8_t> symbols,
                                 const FrequencyTable& table) {
    std::uint32_t state = ans::kStateLow;
    std::vector<std::uint8_t> bytes;
    bytes.reserve(symbols.size() + 8);
    for (std::size_t i = symbols.size(); i-- > 0;) {
        const std::uint8_t s = symbols[i];
        const std::uint32_t f = table.freq(s);
        if (f == 0) {
            throw std::invalid_argument("ans encode: symbol has zero frequency");
        }
        // Renormalize so the state transition stays within 32 bits.
        const std::uint32_t limit = f << 19;  // (kStateLow >> kProbBits) << 8
        while (state >= limit) {
            bytes.push_back(static_cast<std::uint8_t>(state & 0xFFu));
            state >>= 8;
        }
        state = ((state / f) << ans::kProbBits) + (state % f) + table.cum(s);
    }
    // Bytes were emitted in reverse consumption order.
    std::reverse(bytes.begin(), bytes.end());
    detail::put_u32le(bytes, state);
    return AnsChunk{static_cast<std::uint32_t>(symbols.size()), std::move(bytes)};
}

/// Decodes one chunk in isolation. Throws FormatError on truncation or if
/// the final state check fails (desynchronization).
inline std::vector<std::uint8_t> ans_decode_chunk(const AnsChunk& chunk,
                                                  const FrequencyTable& table) {
    if (chunk.payload.size() < 4) {
        throw FormatError("ans decode: truncated chunk payload");
    }
    const std::size_t limit = chunk.payload.size() - 4;
    std::uint32_t state =
        detail::get_u32le(std::span(chunk.payload).subspan(limit, 4));
    std::vector<std::uint8_t> out(chunk.symbol_count);
    std::size_t pos = 0;
    for (std::uint32_t i = 0; i < chunk.symbol_count; ++i) {
        const std::uint32_t slot = state & (ans::kProbScale - 1);
        const std::uint8_t s = table.symbol_at(slot);
        state = static_cast<std::uint32_t>(table.freq(s)) * (state >> ans::kProbBits) +
                slot - table.cum(s);
        while (state < ans::kStateLow) {
            if (pos >= limit) {
                throw FormatError("ans decode: truncated chunk payload");
            }
            state = (state << 8) | chunk.payload[pos++];
        }
        out[i] = s;
    }
    if (state != ans::kStateLow || pos != limit) {
        throw FormatError("ans decode: state desynchronization");
    }
    return out;
}

/// Encodes a symbol sequence into independently decodable 65536-symbol
/// chunks. Chunks are coded in parallel; output is worker-count invariant.
inline AnsStream ans_encode(std::span<const std::uint8_t> symbols,
                            const FrequencyTable& table) {
    const std::size_t n = symbols.size();
    const std::size_t chunk_count = (n + ans::kChunkSymbols - 1) / ans::kChunkSymbols;
    AnsStream stream{table, std::vector<AnsChunk>(chunk_count)};
    parallel_for(chunk_count, [&](std::size_t c) {
        const std::size_t begin = c * ans::kChunkSymbols;
        const std::size_t len = std::min(ans::kChunkSymbols, n - begin);
        stream.chunks[c] = ans_encode_chunk(symbols.subspan(begin, len), table);
    });
    return stream;
}

inline std::vector<std::uint8_t> ans_decode(const AnsStream& stream) {
    std::vector<std::size_t> offsets(stream.chunks.size() + 1, 0);
    for (std::size_t c = 0; c < stream.chunks.size(); ++c) {
        offsets[c + 1] = offsets[c] + stream.chunks[c].symbol_count;
    }
    std::vector<std::uint8_t> out(offsets.back());
    std::exception_ptr failure;
    std::mutex failure_mutex;
    parallel_for(stream.chunks.size(), [&](std::size_t c) {
        try {
            const std::vector<std::uint8_t> part =
                ans_decode_chunk(stream.chunks[c], stream.table);
            std::copy(part.begin(), part.end(), out.begin() + offsets[c]);
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    });
    if (failure) std::rethrow_exception(failure);
    return out;
}

inline std::array<std::uint8_t, ans::kTableBytes> serialize_table(
    const FrequencyTable& table) {
    return table.serialize();
}

inline FrequencyTable deserialize_table(std::span<const std::uint8_t> bytes) {
    return FrequencyTable::deserialize(bytes);
}

/// Chunk framing: [u32 chunk_count][per chunk: u32 symbol_count,
/// u32 payload_len, payload bytes]. The table is serialized separately.
inline std::vector<std::uint8_t> serialize_stream(const AnsStream& stream) {
    std::vector<std::uint8_t> out;
    out.reserve(stream.stream_bytes());
    detail::put_u32le(out, static_cast<std::uint32_t>(stream.chunks.size()));
    for (const AnsChunk& c : stream.chunks) {
        detail::put_u32le(out, c.symbol_count);
        detail::put_u32le(out, static_cast<std::uint32_t>(c.payload.size()));
        out.insert(out.end(), c.payload.begin(), c.payload.end());
    }
    return out;
}

inline AnsStream deserialize_stream(std::span<const std::uint8_t> bytes,
                                    const FrequencyTable& table) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (bytes.size() - pos < n) {
            throw FormatError("ans stream: truncated framing");
        }
    };
    need(4);
    const std::uint32_t chunk_count = detail::get_u32le(bytes.subspan(pos, 4));
    pos += 4;
    AnsStream stream{table, {}};
    stream.chunks.reserve(chunk_count);
    for (std::uint32_t c = 0; c < chunk_count; ++c) {
        need(8);
        AnsChunk chunk;
        chunk.symbol_count = detail::get_u32le(bytes.subspan(pos, 4));
        const std::uint32_t len = detail::get_u32le(bytes.subspan(pos + 4, 4));
        pos += 8;
        need(len);
        chunk.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                             bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
        stream.chunks.push_back(std::move(chunk));
    }
    if (pos != bytes.size()) {
        throw FormatError("ans stream: trailing bytes");
    }
    return stream;
}

} // namespace neuzip
