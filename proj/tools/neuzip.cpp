// neuzip command-line tool: tensor analysis, compression, benchmarking,
// the training demo, and the perturbation grid. All output is CSV with a
// header row; floats print with 6 significant digits, bit-exact columns
// print as hex.
//
// Exit codes: 0 success, 2 bad arguments or malformed input, 3 NaN/Inf on
// the lossy path, 4 checksum failure, 5 trace divergence in train-demo.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "neuzip/neuzip.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNonFinite = 3;
constexpr int kExitChecksum = 4;
constexpr int kExitDivergence = 5;

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

neuzip::Tensor load_bft(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw neuzip::FormatError("cannot open " + path);
    return neuzip::read_bft(in);
}

int cmd_analyze(const std::string& input, bool hist) {
    const neuzip::Tensor tensor = load_bft(input);
    if (tensor.values.empty()) {
        throw neuzip::FormatError("analyze: empty tensor");
    }
    const neuzip::ComponentHistogram h = neuzip::build_histogram(tensor.values);
    const neuzip::EntropyReport r = neuzip::report_from_histogram(h);
    std::cout << "component,entropy_bits,capacity_bits\n";
    std::cout << "sign," << fmt6(r.h_sign) << ",1\n";
    std::cout << "exponent," << fmt6(r.h_exp) << ",8\n";
    std::cout << "mantissa," << fmt6(r.h_mant) << ",7\n";
    std::cout << "ideal_ratio," << fmt6(r.ideal_ratio) << ",\n";
    std::cout << "exponent_only_ratio," << fmt6(r.exponent_only_ratio) << ",\n";
    if (hist) {
        for (std::size_t i = 0; i < h.sign_counts.size(); ++i) {
            std::cout << "hist_sign_" << i << ',' << h.sign_counts[i] << ",\n";
        }
        for (std::size_t i = 0; i < h.exp_counts.size(); ++i) {
            std::cout << "hist_exp_" << i << ',' << h.exp_counts[i] << ",\n";
        }
        for (std::size_t i = 0; i < h.mant_counts.size(); ++i) {
            std::cout << "hist_mant_" << i << ',' << h.mant_counts[i] << ",\n";
        }
    }
    return 0;
}

void print_footprint(const neuzip::Footprint& f, std::uint64_t raw_bytes) {
    std::cout << "section,bytes\n";
    std::cout << "exponent," << f.exponent_bytes << '\n';
    std::cout << "mantissa," << f.mantissa_bytes << '\n';
    std::cout << "scales," << f.scale_bytes << '\n';
    std::cout << "table," << f.table_bytes << '\n';
    std::cout << "header," << f.header_bytes << '\n';
    std::cout << "total," << f.total() << '\n';
    std::cout << "raw," << raw_bytes << '\n';
    std::cout << "ratio," << fmt6(static_cast<double>(raw_bytes) /
                                  static_cast<double>(f.total()))
              << '\n';
}

int cmd_compress(const std::string& input, const std::string& output,
                 int precision, std::uint32_t block_size) {
    const neuzip::Tensor tensor = load_bft(input);
    neuzip::Blob blob =
        precision == neuzip::kLosslessPrecision
            ? neuzip::Blob(neuzip::compress_lossless(tensor.values, tensor.meta))
            : neuzip::Blob(neuzip::compress_lossy(tensor.values, precision,
                                                  block_size, tensor.meta));
    std::ofstream out(output, std::ios::binary);
    if (!out) throw neuzip::Error("cannot open " + output);
    neuzip::write_nzt(blob, out);
    print_footprint(neuzip::footprint(blob), tensor.values.size() * 2);
    return 0;
}

int cmd_decompress(const std::string& input, const std::string& output) {
    std::ifstream in(input, std::ios::binary);
    if (!in) throw neuzip::FormatError("cannot open " + input);
    const neuzip::Blob blob = neuzip::read_nzt(in);
    neuzip::Tensor tensor;
    if (const auto* lossless = std::get_if<neuzip::LosslessBlob>(&blob)) {
        tensor.meta = lossless->meta;
        tensor.values = neuzip::decompress_lossless(*lossless);
    } else {
        const auto& lossy = std::get<neuzip::LossyBlob>(blob);
        tensor.meta = lossy.meta;
        tensor.values = neuzip::decompress_lossy(lossy);
    }
    std::ofstream out(output, std::ios::binary);
    if (!out) throw neuzip::Error("cannot open " + output);
    neuzip::write_bft(tensor, out);
    return 0;
}

int cmd_bench(const std::vector<std::uint64_t>& sizes, int trials,
              std::uint64_t seed) {
    using clock = std::chrono::steady_clock;
    for (std::uint64_t s : sizes) {
        if (s < 4096) throw std::invalid_argument("bench: sizes must be >= 4096");
    }
    if (trials < 1) throw std::invalid_argument("bench: trials must be >= 1");
    std::cout << "direction,size_bytes,gib_per_s\n";
    for (std::uint64_t size : sizes) {
        const std::size_t n = size / 2;
        const std::vector<neuzip::Bf16> data =
            neuzip::rng::gaussian_bf16(seed, n, 0.02);
        std::vector<double> comp_s(trials), decomp_s(trials);
        for (int t = 0; t < trials; ++t) {
            const auto t0 = clock::now();
            const neuzip::LosslessBlob blob = neuzip::compress_lossless(data);
            const auto t1 = clock::now();
            const std::vector<neuzip::Bf16> back =
                neuzip::decompress_lossless(blob);
            const auto t2 = clock::now();
            if (back != data) throw neuzip::Error("bench: round trip mismatch");
            comp_s[t] = std::chrono::duration<double>(t1 - t0).count();
            decomp_s[t] = std::chrono::duration<double>(t2 - t1).count();
        }
        auto median = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            return v[v.size() / 2];
        };
        const double gib = static_cast<double>(size) / (1024.0 * 1024.0 * 1024.0);
        std::cout << "compress," << size << ',' << fmt6(gib / median(comp_s))
                  << '\n';
        std::cout << "decompress," << size << ',' << fmt6(gib / median(decomp_s))
                  << '\n';
    }
    return 0;
}

int cmd_train_demo(const std::string& mode, int steps, float lr,
                   std::uint64_t seed, bool alg1_literal, bool recompute,
                   const std::string& out_dir) {
    neuzip::TrainConfig cfg;
    cfg.seed = seed;
    cfg.lr = lr;
    cfg.steps = steps;
    cfg.alg1_literal = alg1_literal;
    cfg.recompute_activations = recompute;

    if (mode == "vanilla" || mode == "neuzip") {
        cfg.mode = mode == "vanilla" ? neuzip::TrainMode::Vanilla
                                     : neuzip::TrainMode::Neuzip;
        neuzip::trace_to_csv(neuzip::train(cfg), std::cout);
        return 0;
    }

    // The vanilla run is the reference and always uses the textbook
    // backward ordering; --alg1-literal only alters the compressed run.
    cfg.mode = neuzip::TrainMode::Vanilla;
    cfg.alg1_literal = false;
    const neuzip::TrainTrace vanilla = neuzip::train(cfg);
    cfg.mode = neuzip::TrainMode::Neuzip;
    cfg.alg1_literal = alg1_literal;
    const neuzip::TrainTrace compressed = neuzip::train(cfg);

    const std::filesystem::path dir(out_dir);
    std::ofstream van(dir / "trace_vanilla.csv");
    neuzip::trace_to_csv(vanilla, van);
    std::ofstream neu(dir / "trace_neuzip.csv");
    neuzip::trace_to_csv(compressed, neu);
    if (!van || !neu) throw neuzip::Error("train-demo: cannot write traces");

    const bool identical = vanilla == compressed;
    std::cout << "traces,identical," << (identical ? "true" : "false") << '\n';
    return identical ? 0 : kExitDivergence;
}

int cmd_perturb_grid(const std::vector<double>& a_list,
                     const std::vector<double>& r_list, int num_seeds,
                     std::uint64_t seed, int train_steps, float lr) {
    if (num_seeds < 1) throw std::invalid_argument("perturb-grid: need >= 1 seed");
    neuzip::TrainConfig cfg;
    cfg.seed = seed;
    cfg.steps = train_steps;
    cfg.lr = lr;
    const neuzip::TrainOutcome outcome = neuzip::train_full(cfg);
    const neuzip::detail::BatchData eval = neuzip::make_eval_batch(cfg);

    // Average each cell over the requested number of seeds.
    neuzip::GridResult mean_grid;
    for (int s = 0; s < num_seeds; ++s) {
        const neuzip::GridResult g =
            neuzip::run_grid(outcome.model, eval.inputs, eval.targets, a_list,
                             r_list, neuzip::rng::derive(seed, 0x9000u + s));
        if (s == 0) {
            mean_grid = g;
        } else {
            for (std::size_t i = 0; i < g.rows.size(); ++i) {
                mean_grid.rows[i].loss += g.rows[i].loss;
            }
        }
    }
    for (neuzip::GridRow& row : mean_grid.rows) {
        row.loss /= static_cast<float>(num_seeds);
    }
    neuzip::grid_to_csv(mean_grid, std::cout);
    return 0;
}

std::vector<double> default_magnitudes() {
    std::vector<double> m;
    for (int e = -10; e <= -1; ++e) m.push_back(std::ldexp(1.0, e));
    return m;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"neuzip: entropy-based BF16 tensor compression"};
    app.require_subcommand(1);

    std::string input;
    std::string output;
    bool hist = false;
    auto* analyze = app.add_subcommand(
        "analyze", "Per-component entropy report of a BFT tensor");
    analyze->add_option("input", input, "BFT file")->required();
    analyze->add_flag("--hist", hist, "Also dump full histogram bins");

    int precision = neuzip::kLosslessPrecision;
    std::uint32_t block_size = neuzip::kDefaultBlockSize;
    auto* compress =
        app.add_subcommand("compress", "Compress a BFT tensor into NZT");
    compress->add_option("input", input, "BFT file")->required();
    compress->add_option("output", output, "NZT file")->required();
    compress
        ->add_option("-p,--precision", precision,
                     "Retained mantissa bits: 0, 1, 3 or 7 (lossless)")
        ->check(CLI::IsMember({0, 1, 3, 7}));
    compress->add_option("--block-size", block_size,
                         "Normalization block size (lossy only)")
        ->check(CLI::PositiveNumber);

    auto* decompress =
        app.add_subcommand("decompress", "Expand an NZT file back to BFT");
    decompress->add_option("input", input, "NZT file")->required();
    decompress->add_option("output", output, "BFT file")->required();

    std::vector<std::uint64_t> sizes = {100000, 1000000, 10000000, 100000000};
    int trials = 5;
    std::uint64_t seed = 42;
    auto* bench = app.add_subcommand(
        "bench", "Compression/decompression throughput on Gaussian tensors");
    bench->add_option("--sizes", sizes, "Raw tensor sizes in bytes");
    bench->add_option("--trials", trials, "Trials per size (median reported)");
    bench->add_option("--seed", seed, "Generator seed");

    std::string mode = "both";
    int steps = 200;
    float lr = 0.05f;
    bool alg1_literal = false;
    bool recompute = false;
    std::string out_dir = ".";
    auto* train = app.add_subcommand(
        "train-demo", "Train the toy MLP with raw and/or compressed weights");
    train->add_option("--mode", mode, "vanilla | neuzip | both")
        ->check(CLI::IsMember({"vanilla", "neuzip", "both"}));
    train->add_option("--steps", steps, "SGD steps")->check(CLI::NonNegativeNumber);
    train->add_option("--lr", lr, "Learning rate");
    train->add_option("--seed", seed, "Generator seed");
    train->add_flag("--alg1-literal", alg1_literal,
                    "Propagate input gradients through the post-update weight");
    train->add_flag("--recompute", recompute,
                    "Rebuild activations by recomputation before backward");
    train->add_option("--out-dir", out_dir,
                      "Where mode=both writes trace_vanilla.csv/trace_neuzip.csv");

    std::vector<double> a_list = default_magnitudes();
    std::vector<double> r_list = default_magnitudes();
    int num_seeds = 1;
    int train_steps = 200;
    auto* grid = app.add_subcommand(
        "perturb-grid", "Loss degradation over a noise-magnitude grid");
    grid->add_option("--a-list", a_list, "Absolute magnitudes");
    grid->add_option("--r-list", r_list, "Relative magnitudes");
    grid->add_option("--seeds", num_seeds, "Seeds to average per cell");
    grid->add_option("--seed", seed, "Base seed");
    grid->add_option("--train-steps", train_steps, "Toy-model training steps");
    grid->add_option("--lr", lr, "Toy-model learning rate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (analyze->parsed()) return cmd_analyze(input, hist);
        if (compress->parsed())
            return cmd_compress(input, output, precision, block_size);
        if (decompress->parsed()) return cmd_decompress(input, output);
        if (bench->parsed()) return cmd_bench(sizes, trials, seed);
        if (train->parsed())
            return cmd_train_demo(mode, steps, lr, seed, alg1_literal, recompute,
                                  out_dir);
        if (grid->parsed())
            return cmd_perturb_grid(a_list, r_list, num_seeds, seed, train_steps,
                                    lr);
    } catch (const neuzip::ChecksumError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitChecksum;
    } catch (const neuzip::NonFiniteError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNonFinite;
    } catch (const neuzip::FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
