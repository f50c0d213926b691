#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "neuzip/ans.hpp"
#include "neuzip/entropy.hpp"
#include "neuzip/rng.hpp"
#include "oracles.hpp"

using neuzip::Bf16;

namespace {

std::string report_csv(const neuzip::EntropyReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "sign,%.6g\nexponent,%.6g\nmantissa,%.6g\n"
                  "ideal_ratio,%.6g\nexponent_only_ratio,%.6g\n",
                  r.h_sign, r.h_exp, r.h_mant, r.ideal_ratio,
                  r.exponent_only_ratio);
    return buf;
}

} // namespace

TEST_CASE("shannon entropy basics") {
    CHECK(neuzip::shannon_entropy(std::vector<std::uint64_t>{17}) == 0.0);
    CHECK(neuzip::shannon_entropy(std::vector<std::uint64_t>{5, 0, 0}) == 0.0);

    const std::vector<std::uint64_t> uniform(256, 3);
    CHECK_THAT(neuzip::shannon_entropy(uniform),
               Catch::Matchers::WithinAbs(8.0, 1e-12));

    const std::vector<std::uint64_t> skewed{3, 1};
    CHECK_THAT(neuzip::shannon_entropy(skewed),
               Catch::Matchers::WithinAbs(0.811278, 1e-6));
    CHECK_THAT(neuzip::shannon_entropy(skewed),
               Catch::Matchers::WithinAbs(oracles::entropy_ref(skewed), 1e-15));

    CHECK_THROWS_AS(neuzip::shannon_entropy({}), std::invalid_argument);
    CHECK_THROWS_AS(neuzip::shannon_entropy(std::vector<std::uint64_t>{0, 0}),
                    std::invalid_argument);
}

TEST_CASE("analyze constant tensor") {
    const std::vector<Bf16> ones(1000, Bf16{0x3F80});
    const neuzip::EntropyReport r = neuzip::analyze_tensor(ones);
    CHECK(r.h_sign == 0.0);
    CHECK(r.h_exp == 0.0);
    CHECK(r.h_mant == 0.0);
    CHECK(r.ideal_ratio == neuzip::kRatioCap);
    CHECK_THAT(r.exponent_only_ratio, Catch::Matchers::WithinAbs(2.0, 1e-12));
}

TEST_CASE("analyze a balanced sign mix") {
    std::vector<Bf16> values;
    for (int i = 0; i < 500; ++i) {
        values.push_back(Bf16::from_float(1.0f));
        values.push_back(Bf16::from_float(-1.0f));
    }
    const neuzip::EntropyReport r = neuzip::analyze_tensor(values);
    CHECK_THAT(r.h_sign, Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK(r.h_exp == 0.0);
    CHECK(r.h_mant == 0.0);
}

TEST_CASE("analyze rejects empty input") {
    CHECK_THROWS_AS(neuzip::analyze_tensor({}), std::invalid_argument);
}

TEST_CASE("analysis is permutation invariant") {
    std::vector<Bf16> values = neuzip::rng::gaussian_bf16(123, 4096, 0.5);
    const neuzip::EntropyReport before = neuzip::analyze_tensor(values);
    std::mt19937_64 gen(5);
    std::shuffle(values.begin(), values.end(), gen);
    const neuzip::EntropyReport after = neuzip::analyze_tensor(values);
    CHECK(before.h_sign == after.h_sign);
    CHECK(before.h_exp == after.h_exp);
    CHECK(before.h_mant == after.h_mant);
}

TEST_CASE("exponent-only ratio never beats the full entropy bound") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        const auto values = neuzip::rng::gaussian_bf16(seed, 10000, 0.02);
        const neuzip::EntropyReport r = neuzip::analyze_tensor(values);
        CHECK(r.exponent_only_ratio <= r.ideal_ratio);
        CHECK(r.exponent_only_ratio >= 1.0 - 1e-12);
    }
}

TEST_CASE("histogram merge is associative accumulation") {
    const auto values = neuzip::rng::gaussian_bf16(77, 10000, 0.02);
    neuzip::ComponentHistogram whole = neuzip::build_histogram(values);
    neuzip::ComponentHistogram left = neuzip::build_histogram(
        std::span(values).subspan(0, 4000));
    const neuzip::ComponentHistogram right =
        neuzip::build_histogram(std::span(values).subspan(4000));
    left.merge(right);
    CHECK(left.sign_counts == whole.sign_counts);
    CHECK(left.exp_counts == whole.exp_counts);
    CHECK(left.mant_counts == whole.mant_counts);
    CHECK(left.total == whole.total);
}

TEST_CASE("Gaussian init: exponents compressible, mantissas nearly full") {
    const std::size_t n = 1 << 20;
    const auto values = neuzip::rng::gaussian_bf16(42, n, 0.02);
    const neuzip::EntropyReport r = neuzip::analyze_tensor(values);
    CHECK(r.h_exp < 5.0);
    CHECK(r.h_mant > 6.8);

    // Frozen first-derivation values.
    std::ifstream golden(std::string(NEUZIP_TEST_DATA_DIR) +
                         "/gaussian_entropy.csv");
    REQUIRE(golden.good());
    std::stringstream ss;
    ss << golden.rdbuf();
    CHECK(ss.str() == report_csv(r));
}

TEST_CASE("coder stays within two percent of the exponent entropy") {
    const std::size_t n = 1 << 20;
    const auto values = neuzip::rng::gaussian_bf16(42, n, 0.02);
    const neuzip::ComponentHistogram hist = neuzip::build_histogram(values);
    const double h_exp = neuzip::shannon_entropy(hist.exp_counts);

    std::vector<std::uint8_t> exponents(n);
    for (std::size_t i = 0; i < n; ++i) {
        exponents[i] = neuzip::split(values[i]).exponent;
    }
    const neuzip::FrequencyTable table = neuzip::build_table(hist.exp_counts);
    const neuzip::AnsStream stream = neuzip::ans_encode(exponents, table);
    const double bits_per_symbol =
        static_cast<double>(stream.stream_bytes()) * 8.0 /
        static_cast<double>(n);
    const double overhead_bits =
        (64.0 * static_cast<double>(stream.chunks.size()) + 512.0) * 8.0 /
        static_cast<double>(n);
    CHECK(bits_per_symbol >= h_exp * 0.999);
    CHECK(bits_per_symbol <= h_exp * 1.02 + overhead_bits);
}
