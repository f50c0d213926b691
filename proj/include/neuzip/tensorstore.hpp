#pragma once

// Compressed BF16 tensor containers and the NZT on-disk format.
//
// Lossless: exponents are ANS-coded, sign+7-bit mantissa stored raw, one
// byte per element. Round trips are bit-exact for every pattern, NaN/Inf
// included.
//
// Lossy (k in {0,1,3}): each contiguous block of B elements is divided by a
// per-block coefficient c = 1 + m_max/128 taken from the mantissa byte of
// the block's largest-magnitude element, so that element lands exactly on a
// power of two and survives mantissa rounding unchanged. Mantissas are then
// rounded to k bits (carrying into the exponent when the significand wraps)
// and packed (k+1) bits per element; post-normalization exponents are
// ANS-coded. The coefficient scales mantissas only and never touches the
// exponent field directly; the <= 1 exponent shift introduced by dividing
// by c in [1,2) is absorbed by the lossless exponent coder.

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "neuzip/ans.hpp"
#include "neuzip/bitfloat.hpp"
#include "neuzip/crc32.hpp"
#include "neuzip/errors.hpp"

namespace neuzip {

constexpr std::uint32_t kDefaultBlockSize = 512;
constexpr int kLosslessPrecision = 7;

struct TensorMeta {
    std::vector<std::uint64_t> shape;

    std::uint64_t element_count() const {
        std::uint64_t n = 1;
        for (std::uint64_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    void validate() const {
        if (shape.empty()) throw std::invalid_argument("tensor shape is empty");
        if (shape.size() > 8) throw std::invalid_argument("tensor rank exceeds 8");
        for (std::uint64_t d : shape) {
            if (d == 0) throw std::invalid_argument("tensor dimension is zero");
        }
    }

    friend bool operator==(const TensorMeta&, const TensorMeta&) = default;
};

/// Raw tensor paired with its metadata (the BFT file payload).
struct Tensor {
    TensorMeta meta;
    std::vector<Bf16> values;
};

struct LosslessBlob {
    TensorMeta meta;
    AnsStream exp_stream;              // table lives inside the stream
    std::vector<std::uint8_t> signmant;  // k=7 packed: one byte per element

    const FrequencyTable& table() const { return exp_stream.table; }
};

struct LossyBlob {
    TensorMeta meta;
    int precision = 3;                  // k in {0,1,3}
    std::uint32_t block_size = kDefaultBlockSize;
    std::vector<std::uint8_t> scales;   // mantissa byte of each block's max
    AnsStream exp_stream;
    std::vector<std::uint8_t> signmant; // packed (k+1)-bit items

    const FrequencyTable& table() const { return exp_stream.table; }
};

using Blob = std::variant<LosslessBlob, LossyBlob>;

// --- lossless path ---------------------------------------------------------

inline LosslessBlob compress_lossless(std::span<const Bf16> values,
                                      TensorMeta meta) {
    meta.validate();
    if (meta.element_count() != values.size()) {
        throw std::invalid_argument("compress: shape does not match value count");
    }
    const std::size_t n = values.size();
    std::vector<std::uint8_t> exponents(n);
    std::vector<std::uint8_t> signmant(n);
    std::vector<std::uint64_t> counts(256, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const ComponentTriple t = split(values[i]);
        exponents[i] = t.exponent;
        signmant[i] = static_cast<std::uint8_t>((t.sign << 7) | t.mantissa);
        ++counts[t.exponent];
    }
    const FrequencyTable table = build_table(counts);
    return LosslessBlob{std::move(meta), ans_encode(exponents, table),
                        std::move(signmant)};
}

inline LosslessBlob compress_lossless(std::span<const Bf16> values) {
    return compress_lossless(values, TensorMeta{{values.size()}});
}

inline std::vector<Bf16> decompress_lossless(const LosslessBlob& blob) {
    const std::vector<std::uint8_t> exponents = ans_decode(blob.exp_stream);
    const std::uint64_t n = blob.meta.element_count();
    if (exponents.size() != n || blob.signmant.size() != n) {
        throw FormatError("lossless blob: payload length mismatch");
    }
    std::vector<Bf16> out(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        out[i] = merge(ComponentTriple{
            static_cast<std::uint8_t>(blob.signmant[i] >> 7), exponents[i],
            static_cast<std::uint8_t>(blob.signmant[i] & 0x7Fu)});
    }
    return out;
}

// --- lossy path -------------------------------------------------------------

namespace detail {

/// Magnitude order on BF16 bit patterns (sign stripped); ties between equal
/// magnitudes resolve to the lowest index via strict comparison.
inline std::uint16_t magnitude_bits(Bf16 x) { return x.bits & 0x7FFFu; }

inline double scale_coefficient(std::uint8_t scale_byte) {
    return 1.0 + static_cast<double>(scale_byte) / 128.0;
}

} // namespace detail

inline LossyBlob compress_lossy(std::span<const Bf16> values, int k,
                                std::uint32_t block_size, TensorMeta meta) {
    if (k != 0 && k != 1 && k != 3) {
        throw std::invalid_argument("compress_lossy: precision must be 0, 1 or 3");
    }
    if (block_size == 0) {
        throw std::invalid_argument("compress_lossy: block size must be >= 1");
    }
    meta.validate();
    if (meta.element_count() != values.size()) {
        throw std::invalid_argument("compress: shape does not match value count");
    }
    for (Bf16 v : values) {
        if (!v.is_finite()) {
            throw NonFiniteError("compress_lossy: NaN/Inf in input");
        }
    }

    const std::size_t n = values.size();
    const std::size_t blocks = (n + block_size - 1) / block_size;
    std::vector<std::uint8_t> scales(blocks);
    std::vector<std::uint8_t> exponents(n);
    std::vector<SignedMantissa> items(n);

    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t begin = b * block_size;
        const std::size_t end = std::min(begin + block_size, n);
        std::size_t max_at = begin;
        for (std::size_t i = begin + 1; i < end; ++i) {
            if (detail::magnitude_bits(values[i]) >
                detail::magnitude_bits(values[max_at])) {
                max_at = i;
            }
        }
        const std::uint8_t scale_byte = split(values[max_at]).mantissa;
        scales[b] = scale_byte;
        const double c = detail::scale_coefficient(scale_byte);

        for (std::size_t i = begin; i < end; ++i) {
            const Bf16 normalized =
                Bf16::from_float(static_cast<float>(values[i].to_double() / c));
            ComponentTriple t = split(normalized);
            const RoundedMantissa r = round_mantissa(t.mantissa, k);
            if (r.carry) {
                if (t.exponent == 254) {
                    // Incrementing would manufacture an Inf; truncate instead.
                    t.mantissa = truncate_mantissa(t.mantissa, k);
                } else {
                    t.exponent = static_cast<std::uint8_t>(t.exponent + 1);
                    t.mantissa = 0;
                }
            } else {
                t.mantissa = r.mantissa;
            }
            exponents[i] = t.exponent;
            items[i] = SignedMantissa{
                t.sign, static_cast<std::uint8_t>(t.mantissa >> (7 - k))};
        }
    }

    std::vector<std::uint64_t> counts(256, 0);
    for (std::uint8_t e : exponents) ++counts[e];
    const FrequencyTable table = build_table(counts);
    return LossyBlob{std::move(meta),    k,
                     block_size,         std::move(scales),
                     ans_encode(exponents, table),
                     pack_signed_mantissas(items, k)};
}

inline LossyBlob compress_lossy(std::span<const Bf16> values, int k,
                                std::uint32_t block_size = kDefaultBlockSize) {
    return compress_lossy(values, k, block_size, TensorMeta{{values.size()}});
}

inline std::vector<Bf16> decompress_lossy(const LossyBlob& blob) {
    const std::uint64_t n = blob.meta.element_count();
    const std::vector<std::uint8_t> exponents = ans_decode(blob.exp_stream);
    if (exponents.size() != n) {
        throw FormatError("lossy blob: exponent count mismatch");
    }
    const std::vector<SignedMantissa> items =
        unpack_signed_mantissas(blob.signmant, blob.precision, n);
    const std::uint64_t expected_blocks =
        (n + blob.block_size - 1) / blob.block_size;
    if (blob.scales.size() != expected_blocks) {
        throw FormatError("lossy blob: scale count mismatch");
    }
    std::vector<Bf16> out(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const Bf16 normalized = merge(ComponentTriple{
            items[i].sign, exponents[i],
            static_cast<std::uint8_t>(items[i].mantissa << (7 - blob.precision))});
        const double c =
            detail::scale_coefficient(blob.scales[i / blob.block_size]);
        out[i] = Bf16::from_float(static_cast<float>(normalized.to_double() * c));
    }
    return out;
}

// --- byte accounting --------------------------------------------------------

struct Footprint {
    std::uint64_t exponent_bytes = 0;
    std::uint64_t mantissa_bytes = 0;
    std::uint64_t scale_bytes = 0;
    std::uint64_t table_bytes = 0;
    std::uint64_t header_bytes = 0;

    std::uint64_t total() const {
        return exponent_bytes + mantissa_bytes + scale_bytes + table_bytes +
               header_bytes;
    }
};

namespace detail {

// magic + version + precision + block_size + ndim + shape dims
// + scales_len(u32) + exp_len(u64) + signmant_len(u64) + crc(u32)
inline std::uint64_t nzt_header_bytes(std::size_t ndim) {
    return 4 + 1 + 1 + 4 + 1 + 8 * static_cast<std::uint64_t>(ndim) + 4 + 8 + 8 + 4;
}

} // namespace detail

inline Footprint footprint(const LosslessBlob& blob) {
    Footprint f;
    f.exponent_bytes = blob.exp_stream.stream_bytes();
    f.mantissa_bytes = blob.signmant.size();
    f.scale_bytes = 0;
    f.table_bytes = ans::kTableBytes;
    f.header_bytes = detail::nzt_header_bytes(blob.meta.shape.size());
    return f;
}

inline Footprint footprint(const LossyBlob& blob) {
    Footprint f;
    f.exponent_bytes = blob.exp_stream.stream_bytes();
    f.mantissa_bytes = blob.signmant.size();
    f.scale_bytes = blob.scales.size();
    f.table_bytes = ans::kTableBytes;
    f.header_bytes = detail::nzt_header_bytes(blob.meta.shape.size());
    return f;
}

inline Footprint footprint(const Blob& blob) {
    return std::visit([](const auto& b) { return footprint(b); }, blob);
}

// --- NZT container ----------------------------------------------------------
//
// Little-endian, normative:
//   magic "NZT1" | u8 version=1 | u8 precision (7=lossless)
//   u32 block_size (0 for lossless) | u8 ndim | u64 x ndim shape
//   512-byte frequency table | u32 scales_len + scale bytes
//   u64 exp_stream_len + stream bytes | u64 signmant_len + packed bytes
//   u32 CRC32 over the four payload sections (table, scales, stream, mantissas)

namespace detail {

inline void write_bytes(std::ostream& out, std::span<const std::uint8_t> b) {
    out.write(reinterpret_cast<const char*>(b.data()),
              static_cast<std::streamsize>(b.size()));
}

template <typename T>
void write_le(std::ostream& out, T value) {
    std::uint8_t buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf[i] = static_cast<std::uint8_t>(
            static_cast<std::uint64_t>(value) >> (8 * i));
    }
    write_bytes(out, buf);
}

inline void read_bytes(std::istream& in, std::span<std::uint8_t> b) {
    in.read(reinterpret_cast<char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
    if (static_cast<std::size_t>(in.gcount()) != b.size()) {
        throw FormatError("unexpected end of file");
    }
}

template <typename T>
T read_le(std::istream& in) {
    std::uint8_t buf[sizeof(T)];
    read_bytes(in, buf);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    }
    return static_cast<T>(v);
}

struct NztBody {
    TensorMeta meta;
    int precision = kLosslessPrecision;
    std::uint32_t block_size = 0;
    std::vector<std::uint8_t> scales;
    std::vector<std::uint8_t> exp_bytes;
    std::vector<std::uint8_t> signmant;
};

inline void write_nzt_body(std::ostream& out, const NztBody& body,
                           const FrequencyTable& table) {
    out.write("NZT1", 4);
    write_le<std::uint8_t>(out, 1);
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(body.precision));
    write_le<std::uint32_t>(out, body.block_size);
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(body.meta.shape.size()));
    for (std::uint64_t d : body.meta.shape) write_le<std::uint64_t>(out, d);

    const auto table_bytes = table.serialize();
    Crc32 crc;
    crc.update(table_bytes);
    crc.update(body.scales);
    crc.update(body.exp_bytes);
    crc.update(body.signmant);

    write_bytes(out, table_bytes);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(body.scales.size()));
    write_bytes(out, body.scales);
    write_le<std::uint64_t>(out, body.exp_bytes.size());
    write_bytes(out, body.exp_bytes);
    write_le<std::uint64_t>(out, body.signmant.size());
    write_bytes(out, body.signmant);
    write_le<std::uint32_t>(out, crc.value());
    if (!out) throw Error("nzt: write failed");
}

} // namespace detail

inline void write_nzt(const LosslessBlob& blob, std::ostream& out) {
    detail::NztBody body{blob.meta,
                         kLosslessPrecision,
                         0,
                         {},
                         serialize_stream(blob.exp_stream),
                         blob.signmant};
    detail::write_nzt_body(out, body, blob.table());
}

inline void write_nzt(const LossyBlob& blob, std::ostream& out) {
    detail::NztBody body{blob.meta,
                         blob.precision,
                         blob.block_size,
                         blob.scales,
                         serialize_stream(blob.exp_stream),
                         blob.signmant};
    detail::write_nzt_body(out, body, blob.table());
}

inline void write_nzt(const Blob& blob, std::ostream& out) {
    std::visit([&](const auto& b) { write_nzt(b, out); }, blob);
}

inline Blob read_nzt(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::string(magic, 4) != "NZT1") {
        throw FormatError("nzt: bad magic");
    }
    const auto version = detail::read_le<std::uint8_t>(in);
    if (version != 1) throw FormatError("nzt: unsupported version");
    const int precision = detail::read_le<std::uint8_t>(in);
    if (precision != 0 && precision != 1 && precision != 3 &&
        precision != kLosslessPrecision) {
        throw FormatError("nzt: invalid precision");
    }
    const auto block_size = detail::read_le<std::uint32_t>(in);
    const auto ndim = detail::read_le<std::uint8_t>(in);
    if (ndim == 0 || ndim > 8) throw FormatError("nzt: invalid rank");
    TensorMeta meta;
    meta.shape.resize(ndim);
    std::uint64_t n = 1;
    for (auto& d : meta.shape) {
        d = detail::read_le<std::uint64_t>(in);
        if (d == 0) throw FormatError("nzt: zero dimension");
        if (d > (std::uint64_t{1} << 40) / n) {
            throw FormatError("nzt: element count overflow");
        }
        n *= d;
    }

    // Section lengths are validated against the element count before any
    // allocation, so corrupt framing cannot trigger huge buffers.
    if (precision == kLosslessPrecision) {
        if (block_size != 0) throw FormatError("nzt: lossless blob carries block data");
    } else if (block_size == 0) {
        throw FormatError("nzt: lossy blob without block size");
    }
    const std::uint64_t expected_scales =
        precision == kLosslessPrecision ? 0 : (n + block_size - 1) / block_size;
    const std::uint64_t expected_signmant =
        (n * (static_cast<std::uint64_t>(precision) + 1) + 7) / 8;
    const std::uint64_t chunks = (n + ans::kChunkSymbols - 1) / ans::kChunkSymbols;
    const std::uint64_t exp_len_cap = 2 * n + 16 * chunks + 64;

    std::vector<std::uint8_t> table_bytes(ans::kTableBytes);
    detail::read_bytes(in, table_bytes);
    const auto scales_len = detail::read_le<std::uint32_t>(in);
    if (scales_len != expected_scales) throw FormatError("nzt: scale count mismatch");
    std::vector<std::uint8_t> scales(scales_len);
    detail::read_bytes(in, scales);
    const auto exp_len = detail::read_le<std::uint64_t>(in);
    if (exp_len > exp_len_cap) throw FormatError("nzt: exponent stream oversized");
    std::vector<std::uint8_t> exp_bytes(exp_len);
    detail::read_bytes(in, exp_bytes);
    const auto signmant_len = detail::read_le<std::uint64_t>(in);
    if (signmant_len != expected_signmant) {
        throw FormatError("nzt: sign-mantissa length mismatch");
    }
    std::vector<std::uint8_t> signmant(signmant_len);
    detail::read_bytes(in, signmant);
    const auto stored_crc = detail::read_le<std::uint32_t>(in);

    Crc32 crc;
    crc.update(table_bytes);
    crc.update(scales);
    crc.update(exp_bytes);
    crc.update(signmant);
    if (crc.value() != stored_crc) {
        throw ChecksumError("nzt: checksum failure");
    }

    const FrequencyTable table = deserialize_table(table_bytes);
    AnsStream stream = deserialize_stream(exp_bytes, table);
    if (stream.symbol_count() != n) {
        throw FormatError("nzt: exponent count mismatch");
    }

    if (precision == kLosslessPrecision) {
        return LosslessBlob{std::move(meta), std::move(stream),
                            std::move(signmant)};
    }
    return LossyBlob{std::move(meta), precision,          block_size,
                     std::move(scales), std::move(stream), std::move(signmant)};
}

// --- BFT raw tensor format ---------------------------------------------------
// magic "BFT1" | u8 ndim | u64 x ndim shape | element_count x u16 LE bits

inline void write_bft(const Tensor& tensor, std::ostream& out) {
    tensor.meta.validate();
    if (tensor.meta.element_count() != tensor.values.size()) {
        throw std::invalid_argument("bft: shape does not match value count");
    }
    out.write("BFT1", 4);
    detail::write_le<std::uint8_t>(
        out, static_cast<std::uint8_t>(tensor.meta.shape.size()));
    for (std::uint64_t d : tensor.meta.shape) detail::write_le<std::uint64_t>(out, d);
    for (Bf16 v : tensor.values) detail::write_le<std::uint16_t>(out, v.bits);
    if (!out) throw Error("bft: write failed");
}

inline Tensor read_bft(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::string(magic, 4) != "BFT1") {
        throw FormatError("bft: bad magic");
    }
    const auto ndim = detail::read_le<std::uint8_t>(in);
    if (ndim == 0 || ndim > 8) throw FormatError("bft: invalid rank");
    Tensor t;
    t.meta.shape.resize(ndim);
    std::uint64_t n = 1;
    for (auto& d : t.meta.shape) {
        d = detail::read_le<std::uint64_t>(in);
        if (d == 0) throw FormatError("bft: zero dimension");
        if (d > (std::uint64_t{1} << 40) / n) {
            throw FormatError("bft: element count overflow");
        }
        n *= d;
    }
    t.values.resize(n);
    for (auto& v : t.values) v.bits = detail::read_le<std::uint16_t>(in);
    return t;
}

} // namespace neuzip
