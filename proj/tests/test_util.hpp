#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "pplxprune/io.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static std::atomic<uint64_t> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("pplxprune-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(std::string_view name) const { return path / name; }
};

// Exit code of a shell command, or -1 if it did not exit normally.
inline int run_cmd(const std::string& cmd) {
    int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return -1;
}

inline std::string cli_path() { return PPLXPRUNE_CLI_BIN; }
inline std::string synth_path() { return PPLXPRUNE_SYNTH_BIN; }

inline bool same_bytes(const std::filesystem::path& a, const std::filesystem::path& b) {
    return pplxprune::read_file(a) == pplxprune::read_file(b);
}

} // namespace testutil
