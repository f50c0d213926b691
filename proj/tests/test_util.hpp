#pragma once

// Shared helpers for the test suites: scratch directories, file helpers,
// and a runner for the command-line tool.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

namespace testutil {

/// Scratch directory removed when the object goes out of scope.
class TempDir {
public:
    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        std::random_device rd;
        path_ = base / ("neuzip_test_" + std::to_string(rd()) + "_" +
                        std::to_string(::getpid()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::vector<std::uint8_t> out;
    char c;
    while (in.get(c)) out.push_back(static_cast<std::uint8_t>(c));
    return out;
}

inline void write_file(const std::filesystem::path& p,
                       const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CliResult {
    int exit_code = -1;
    std::string output;  // captured stdout
};

#ifdef NEUZIP_CLI_PATH
/// Runs the CLI with the given argument string; stderr is discarded.
inline CliResult run_cli(const std::string& args,
                         const std::filesystem::path& workdir) {
    const std::filesystem::path out_file = workdir / "cli_stdout.txt";
    const std::string cmd = std::string("cd '") + workdir.string() + "' && '" +
                            NEUZIP_CLI_PATH + "' " + args + " > '" +
                            out_file.string() + "' 2> /dev/null";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = read_text(out_file);
    return r;
}
#endif

} // namespace testutil
