#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <random>

#include "neuzip/ans.hpp"
#include "oracles.hpp"

using neuzip::AnsStream;
using neuzip::FrequencyTable;

namespace {

std::vector<std::uint64_t> count_symbols(std::span<const std::uint8_t> data) {
    std::vector<std::uint64_t> counts(256, 0);
    for (std::uint8_t s : data) ++counts[s];
    return counts;
}

std::vector<std::uint8_t> uniform_bytes(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::vector<std::uint8_t> out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(gen());
    return out;
}

std::vector<std::uint8_t> zipf_bytes(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::vector<double> weights(256);
    for (int s = 0; s < 256; ++s) weights[s] = 1.0 / (1.0 + s);
    std::discrete_distribution<int> dist(weights.begin(), weights.end());
    std::vector<std::uint8_t> out(n);
    for (auto& b : out) b = static_cast<std::uint8_t>(dist(gen));
    return out;
}

double size_bound(std::span<const std::uint8_t> data,
                  const FrequencyTable& table, std::size_t chunks) {
    const auto counts = count_symbols(data);
    const double hq =
        oracles::cross_entropy_ref(counts, table.frequencies());
    return 1.02 * static_cast<double>(data.size()) * hq / 8.0 +
           64.0 * static_cast<double>(chunks) + 512.0;
}

} // namespace

TEST_CASE("build_table quantization") {
    SECTION("single symbol takes the whole scale") {
        std::vector<std::uint64_t> counts(256, 0);
        counts[42] = 4096;
        const FrequencyTable t = neuzip::build_table(counts);
        CHECK(t.freq(42) == 4096);
        CHECK(t.cum(42) == 0);
    }
    SECTION("uniform counts quantize to 16 each") {
        const std::vector<std::uint64_t> counts(256, 1000);
        const FrequencyTable t = neuzip::build_table(counts);
        for (int s = 0; s < 256; ++s) CHECK(t.freq(s) == 16);
    }
    SECTION("3:1 split matches the largest-remainder oracle") {
        std::vector<std::uint64_t> counts(256, 0);
        counts[0] = 3;
        counts[1] = 1;
        const FrequencyTable t = neuzip::build_table(counts);
        CHECK(t.freq(0) == 3072);
        CHECK(t.freq(1) == 1024);
        const auto ref = oracles::largest_remainder_ref(counts, 4096);
        CHECK(t.freq(0) == ref[0]);
        CHECK(t.freq(1) == ref[1]);
    }
    SECTION("all-zero counts are rejected") {
        const std::vector<std::uint64_t> counts(256, 0);
        CHECK_THROWS_AS(neuzip::build_table(counts), std::invalid_argument);
        CHECK_THROWS_AS(neuzip::build_table(std::vector<std::uint64_t>(10, 1)),
                        std::invalid_argument);
    }
    SECTION("agrees with the oracle when no symbol needs the floor repair") {
        std::mt19937_64 gen(3);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<std::uint64_t> counts(256, 0);
            for (int s = 0; s < 256; ++s) counts[s] = 100 + gen() % 1000;
            const FrequencyTable t = neuzip::build_table(counts);
            const auto ref = oracles::largest_remainder_ref(counts, 4096);
            for (int s = 0; s < 256; ++s) {
                CHECK(t.freq(s) == ref[s]);
            }
        }
    }
}

TEST_CASE("build_table preserves presence and sums to 4096") {
    std::mt19937_64 gen(17);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::uint64_t> counts(256, 0);
        const int present = 1 + static_cast<int>(gen() % 256);
        for (int i = 0; i < present; ++i) {
            const int s = static_cast<int>(gen() % 256);
            // Mix huge and tiny counts so some symbols quantize below 1.
            counts[s] += (gen() % 2) ? 1 : (gen() % 1000000);
            if (counts[s] == 0) counts[s] = 1;
        }
        const FrequencyTable t = neuzip::build_table(counts);
        std::uint32_t sum = 0;
        for (int s = 0; s < 256; ++s) {
            sum += t.freq(s);
            if (counts[s] > 0) {
                CHECK(t.freq(s) >= 1);
            } else {
                CHECK(t.freq(s) == 0);
            }
        }
        CHECK(sum == 4096);
        // Deterministic: rebuilding gives the identical table.
        CHECK(neuzip::build_table(counts) == t);
    }
}

TEST_CASE("table serialization layout") {
    SECTION("uniform table is 0x10 0x00 repeated") {
        const std::vector<std::uint64_t> counts(256, 7);
        const auto bytes = neuzip::serialize_table(neuzip::build_table(counts));
        REQUIRE(bytes.size() == 512);
        for (int s = 0; s < 256; ++s) {
            CHECK(bytes[2 * s] == 0x10);
            CHECK(bytes[2 * s + 1] == 0x00);
        }
    }
    SECTION("4095/1 split little-endian layout") {
        std::vector<std::uint64_t> counts(256, 0);
        counts[0] = 4095;
        counts[1] = 1;
        const auto bytes = neuzip::serialize_table(neuzip::build_table(counts));
        CHECK(bytes[0] == 0xFF);
        CHECK(bytes[1] == 0x0F);
        CHECK(bytes[2] == 0x01);
        CHECK(bytes[3] == 0x00);
        for (std::size_t i = 4; i < 512; ++i) CHECK(bytes[i] == 0);
    }
    SECTION("round trip and validation") {
        std::vector<std::uint64_t> counts(256, 0);
        counts[9] = 5;
        counts[200] = 11;
        const FrequencyTable t = neuzip::build_table(counts);
        CHECK(neuzip::deserialize_table(t.serialize()) == t);

        CHECK_THROWS_AS(
            neuzip::deserialize_table(std::vector<std::uint8_t>(511, 0)),
            neuzip::FormatError);
        std::vector<std::uint8_t> bad(512, 0);
        bad[0] = 0x01;  // sum = 1, not 4096
        CHECK_THROWS_AS(neuzip::deserialize_table(bad), neuzip::FormatError);
    }
}

TEST_CASE("constant stream compresses to almost nothing") {
    const std::vector<std::uint8_t> xs(100000, 7);
    const FrequencyTable t = neuzip::build_table(count_symbols(xs));
    const AnsStream stream = neuzip::ans_encode(xs, t);
    CHECK(stream.stream_bytes() < 200);
    CHECK(neuzip::ans_decode(stream) == xs);
}

TEST_CASE("empty stream") {
    const FrequencyTable t =
        neuzip::build_table(std::vector<std::uint64_t>(256, 1));
    const AnsStream stream = neuzip::ans_encode({}, t);
    CHECK(stream.chunks.empty());
    CHECK(neuzip::ans_decode(stream).empty());
}

TEST_CASE("uniform megabyte lands within two percent of incompressible") {
    const std::size_t n = 1 << 20;
    const auto xs = uniform_bytes(n, 99);
    const FrequencyTable t = neuzip::build_table(count_symbols(xs));
    const AnsStream stream = neuzip::ans_encode(xs, t);
    const auto size = static_cast<double>(stream.stream_bytes());
    CHECK(size >= 1.00 * static_cast<double>(n));
    CHECK(size <= 1.02 * static_cast<double>(n));
    CHECK(neuzip::ans_decode(stream) == xs);
}

TEST_CASE("near-optimality against the entropy oracle") {
    const std::size_t n = 1 << 20;
    for (auto& xs : {uniform_bytes(n, 5), zipf_bytes(n, 6),
                     std::vector<std::uint8_t>(n, 31)}) {
        const FrequencyTable t = neuzip::build_table(count_symbols(xs));
        const AnsStream stream = neuzip::ans_encode(xs, t);
        CHECK(static_cast<double>(stream.stream_bytes()) <=
              size_bound(xs, t, stream.chunks.size()));
        CHECK(neuzip::ans_decode(stream) == xs);
    }
}

TEST_CASE("round trip across lengths and distributions") {
    const std::size_t lengths[] = {0, 1, 2, 999, 65535, 65536, 65537, 200000};
    int failures = 0;
    for (std::size_t n : lengths) {
        for (int kind = 0; kind < 3; ++kind) {
            std::vector<std::uint8_t> xs =
                kind == 0   ? uniform_bytes(n, n + 1)
                : kind == 1 ? zipf_bytes(n, n + 2)
                            : std::vector<std::uint8_t>(n, 128);
            if (n == 0) {
                xs.clear();
            }
            std::vector<std::uint64_t> counts = count_symbols(xs);
            if (n == 0) counts[0] = 1;  // table still needs one present symbol
            const FrequencyTable t = neuzip::build_table(counts);
            if (neuzip::ans_decode(neuzip::ans_encode(xs, t)) != xs) ++failures;
        }
    }
    // One large skewed case at the top of the fuzzed range.
    const auto big = zipf_bytes(1000000, 44);
    const FrequencyTable t = neuzip::build_table(count_symbols(big));
    if (neuzip::ans_decode(neuzip::ans_encode(big, t)) != big) ++failures;
    REQUIRE(failures == 0);
}

TEST_CASE("chunks decode independently") {
    const auto xs = zipf_bytes(200000, 8);
    const FrequencyTable t = neuzip::build_table(count_symbols(xs));
    const AnsStream stream = neuzip::ans_encode(xs, t);
    REQUIRE(stream.chunks.size() == 4);
    const auto middle = neuzip::ans_decode_chunk(stream.chunks[1], t);
    const std::vector<std::uint8_t> expected(xs.begin() + 65536,
                                             xs.begin() + 2 * 65536);
    CHECK(middle == expected);
}

TEST_CASE("error paths") {
    SECTION("encoding a symbol with zero frequency") {
        std::vector<std::uint64_t> counts(256, 0);
        counts[1] = 10;
        const FrequencyTable t = neuzip::build_table(counts);
        const std::vector<std::uint8_t> xs = {1, 2, 1};
        CHECK_THROWS_AS(neuzip::ans_encode(xs, t), std::invalid_argument);
    }
    SECTION("truncated payload") {
        const auto xs = zipf_bytes(1000, 9);
        const FrequencyTable t = neuzip::build_table(count_symbols(xs));
        AnsStream stream = neuzip::ans_encode(xs, t);
        stream.chunks[0].payload.resize(stream.chunks[0].payload.size() - 5);
        CHECK_THROWS_AS(neuzip::ans_decode(stream), neuzip::FormatError);

        AnsStream tiny = neuzip::ans_encode(xs, t);
        tiny.chunks[0].payload.resize(2);
        CHECK_THROWS_AS(neuzip::ans_decode(tiny), neuzip::FormatError);
    }
    SECTION("corrupted final state is caught by the sentinel check") {
        const auto xs = uniform_bytes(5000, 10);
        const FrequencyTable t = neuzip::build_table(count_symbols(xs));
        AnsStream stream = neuzip::ans_encode(xs, t);
        stream.chunks[0].payload.back() ^= 0x01;
        CHECK_THROWS_AS(neuzip::ans_decode(stream), neuzip::FormatError);
    }
}

TEST_CASE("stream framing round trip") {
    const auto xs = zipf_bytes(150000, 12);
    const FrequencyTable t = neuzip::build_table(count_symbols(xs));
    const AnsStream stream = neuzip::ans_encode(xs, t);
    const auto bytes = neuzip::serialize_stream(stream);
    CHECK(bytes.size() == stream.stream_bytes());
    const AnsStream back = neuzip::deserialize_stream(bytes, t);
    CHECK(back.chunks == stream.chunks);

    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(neuzip::deserialize_stream(trailing, t), neuzip::FormatError);
    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 3);
    CHECK_THROWS_AS(neuzip::deserialize_stream(truncated, t),
                    neuzip::FormatError);
}

TEST_CASE("byte stream is identical for any worker count") {
    const auto xs = zipf_bytes(300000, 13);
    const FrequencyTable t = neuzip::build_table(count_symbols(xs));

    setenv("NEUZIP_THREADS", "1", 1);
    const auto serial = neuzip::serialize_stream(neuzip::ans_encode(xs, t));
    setenv("NEUZIP_THREADS", "4", 1);
    const auto parallel = neuzip::serialize_stream(neuzip::ans_encode(xs, t));
    unsetenv("NEUZIP_THREADS");

    CHECK(serial == parallel);
}
